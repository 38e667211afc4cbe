#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "conquer/bits.hpp"
#include "conquer/circuit.hpp"
#include "conquer/errors.hpp"
#include "conquer/rng.hpp"

namespace conquer {

enum class ObjectiveKind { high_weight, low_weight, balanced, bias_mitigation };

inline std::string to_string(ObjectiveKind k) {
    switch (k) {
        case ObjectiveKind::high_weight: return "high_weight";
        case ObjectiveKind::low_weight: return "low_weight";
        case ObjectiveKind::balanced: return "balanced";
        case ObjectiveKind::bias_mitigation: return "bias_mitigation";
    }
    return "?";
}

inline ObjectiveKind parse_objective_kind(std::string_view s) {
    if (s == "high_weight" || s == "high") return ObjectiveKind::high_weight;
    if (s == "low_weight" || s == "low") return ObjectiveKind::low_weight;
    if (s == "balanced") return ObjectiveKind::balanced;
    if (s == "bias_mitigation" || s == "bias") return ObjectiveKind::bias_mitigation;
    throw ArgumentError("unknown control objective '" + std::string(s) +
                        "' (expected high_weight, low_weight, balanced or bias_mitigation)");
}

/// Inclusive Hamming-weight window used to filter training data for an objective.
struct WeightRange {
    int lo = 0;
    int hi = 0;
    bool contains(Bits x) const {
        const int w = hamming_weight(x);
        return w >= lo && w <= hi;
    }
    bool operator==(const WeightRange &) const = default;
};

/// Control objective. The weight window defaults per kind and n:
///   high_weight  HW >= ceil(2n/3)
///   low_weight   HW <= floor(n/3)
///   balanced     |HW - n/2| <= ceil(n/8)
///   bias_mitigation  no filter
/// and may be overridden.
struct ControlObjective {
    ObjectiveKind kind = ObjectiveKind::balanced;
    std::optional<WeightRange> range;

    WeightRange weight_range(unsigned n) const {
        if (range) return *range;
        const int ni = static_cast<int>(n);
        switch (kind) {
            case ObjectiveKind::high_weight: return {(2 * ni + 2) / 3, ni};
            case ObjectiveKind::low_weight: return {0, ni / 3};
            case ObjectiveKind::balanced: {
                const int slack = (ni + 7) / 8;
                // 2 HW in [n - 2 slack, n + 2 slack]
                return {(ni - 2 * slack + 1) / 2, (ni + 2 * slack) / 2};
            }
            case ObjectiveKind::bias_mitigation: return {0, ni};
        }
        return {0, ni};
    }
};

// ---------------------------------------------------------------------------
// Weight matrix
// ---------------------------------------------------------------------------

/// |theta| of the order-1 and order-2 generators of a circuit, as a symmetric n x n matrix.
struct WeightMatrix {
    unsigned n = 0;
    std::vector<double> w;  // row-major
    std::vector<double> row_strength;

    double operator()(unsigned i, unsigned j) const { return w[static_cast<std::size_t>(i) * n + j]; }
};

inline WeightMatrix extract_weights(const IQPCircuit &base) {
    const unsigned n = base.n_qubits();
    WeightMatrix m{n, std::vector<double>(static_cast<std::size_t>(n) * n, 0.0), std::vector<double>(n, 0.0)};
    for (std::size_t j = 0; j < base.size(); ++j) {
        const auto q = base.generator(j).qubits();
        const double a = std::abs(base.theta(j));
        if (q.size() == 1) {
            m.w[static_cast<std::size_t>(q[0]) * n + q[0]] = a;
        } else if (q.size() == 2) {
            m.w[static_cast<std::size_t>(q[0]) * n + q[1]] = a;
            m.w[static_cast<std::size_t>(q[1]) * n + q[0]] = a;
        }
    }
    for (unsigned i = 0; i < n; ++i) {
        for (unsigned j = 0; j < n; ++j) {
            if (j != i) m.row_strength[i] += m(i, j);
        }
    }
    return m;
}

/// Mean |theta| per gate order (index k holds order k; index 0 unused, NaN where no gates).
inline std::vector<double> mean_abs_theta_by_order(const IQPCircuit &c) {
    const unsigned top = c.max_order();
    std::vector<double> sum(top + 1, 0.0), count(top + 1, 0.0);
    for (std::size_t j = 0; j < c.size(); ++j) {
        const auto k = static_cast<std::size_t>(c.generator(j).order());
        sum[k] += std::abs(c.theta(j));
        count[k] += 1.0;
    }
    std::vector<double> mean(top + 1, std::nan(""));
    for (std::size_t k = 1; k <= top; ++k)
        if (count[k] > 0) mean[k] = sum[k] / count[k];
    return mean;
}

// ---------------------------------------------------------------------------
// Gate selection and initialization
// ---------------------------------------------------------------------------

struct BiasSelection {
    double threshold = 0.1;
    unsigned window = 3;
};

inline std::vector<Generator> get_control_gates(const ControlObjective &obj, unsigned n, const IQPCircuit &base,
                                                const BiasSelection &sel = {}) {
    std::vector<Generator> out;
    switch (obj.kind) {
        case ObjectiveKind::high_weight:
        case ObjectiveKind::low_weight:
            for (unsigned i = 0; i + 2 < n; ++i) out.push_back(Generator::from_qubits({i, i + 2}));
            break;
        case ObjectiveKind::bias_mitigation: {
            if (base.n_qubits() != n) throw ArgumentError("base circuit qubit count does not match n");
            const auto w = extract_weights(base);
            for (unsigned i = 0; i < n; ++i) {
                for (unsigned j = i + 1; j < n && j - i <= sel.window; ++j) {
                    if (w(i, j) < sel.threshold) out.push_back(Generator::from_qubits({i, j}));
                }
            }
            const double mean = std::accumulate(w.row_strength.begin(), w.row_strength.end(), 0.0) / n;
            for (unsigned i = 0; i < n; ++i) {
                if (w.row_strength[i] < mean) out.push_back(Generator::from_qubits({i}));
            }
            break;
        }
        case ObjectiveKind::balanced:
            break;
    }
    std::sort(out.begin(), out.end(), canonical_less);
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

struct SmartInitConfig {
    double high_weight_mean = -0.1;
    double low_weight_mean = 0.1;
    double weight_sd = 0.02;
    double noise_sd = 0.01;
};

/// Singletons lean towards flipping (high weight) or holding (low weight); everything else is small noise.
inline std::vector<double> smart_initialize(std::span<const Generator> gates, const ControlObjective &obj, Rng &rng,
                                            const SmartInitConfig &cfg = {}) {
    if (gates.empty()) throw ArgumentError("smart_initialize needs at least one gate");
    std::vector<double> phi(gates.size());
    for (std::size_t j = 0; j < gates.size(); ++j) {
        if (gates[j].order() == 1 && obj.kind == ObjectiveKind::high_weight) {
            phi[j] = normal(rng, cfg.high_weight_mean, cfg.weight_sd);
        } else if (gates[j].order() == 1 && obj.kind == ObjectiveKind::low_weight) {
            phi[j] = normal(rng, cfg.low_weight_mean, cfg.weight_sd);
        } else {
            phi[j] = normal(rng, 0.0, cfg.noise_sd);
        }
    }
    return phi;
}

// ---------------------------------------------------------------------------
// Controller construction
// ---------------------------------------------------------------------------

struct ControllerBundle {
    IQPCircuit circuit;  // controller gates only; parameters are phi
    ControlObjective objective;
    std::uint64_t seed = 0;

    const std::vector<double> &phi() const { return circuit.theta(); }
};

/// Layer 1: nearest-neighbour pairs {i, i+1}, even i first, then odd i (for even n: [0, n-2] and [1, n-3]).
/// Layer 2: objective-specific gates. Layer 3: singletons. First occurrence wins on duplicates.
inline std::vector<Generator> controller_layout(unsigned n, const ControlObjective &obj, const IQPCircuit &base,
                                                const BiasSelection &sel = {}) {
    if (n < 4) throw ArgumentError("controller needs at least 4 qubits, got " + std::to_string(n));
    if (n > kMaxQubits) throw ArgumentError("controller supports at most 64 qubits");
    std::vector<Generator> gates;
    auto add = [&](Generator g) {
        if (std::find(gates.begin(), gates.end(), g) == gates.end()) gates.push_back(g);
    };
    for (unsigned i = 0; i + 1 < n; i += 2) add(Generator::from_qubits({i, i + 1}));
    for (unsigned i = 1; i + 1 < n; i += 2) add(Generator::from_qubits({i, i + 1}));
    for (auto g : get_control_gates(obj, n, base, sel)) add(g);
    for (unsigned i = 0; i < n; ++i) add(Generator::from_qubits({i}));
    return gates;
}

inline ControllerBundle construct_controller(unsigned n, const ControlObjective &obj, const IQPCircuit &base,
                                             std::uint64_t seed, const SmartInitConfig &init = {},
                                             const BiasSelection &sel = {}) {
    auto gates = controller_layout(n, obj, base, sel);
    Rng rng = make_stream(seed, {0x5eed});
    auto phi = smart_initialize(gates, obj, rng, init);
    return {IQPCircuit(n, std::move(gates), std::move(phi)), obj, seed};
}

// ---------------------------------------------------------------------------
// Serialization: circuit text format with a leading "controller ..." comment.
// ---------------------------------------------------------------------------

inline void write_controller(std::ostream &out, const ControllerBundle &b) {
    std::ostringstream head;
    head << "controller objective=" << to_string(b.objective.kind) << " seed=" << b.seed;
    if (b.objective.range) head << " hw_lo=" << b.objective.range->lo << " hw_hi=" << b.objective.range->hi;
    const std::string lines[] = {head.str()};
    write_circuit(out, b.circuit, lines);
}

inline ControllerBundle read_controller(std::istream &in) {
    std::vector<std::string> comments;
    auto circuit = read_circuit(in, &comments);
    for (const auto &line : comments) {
        std::istringstream ls(line);
        std::string word;
        if (!(ls >> word) || word != "controller") continue;
        ControllerBundle b{std::move(circuit), {}, 0};
        std::optional<int> lo, hi;
        bool have_kind = false;
        while (ls >> word) {
            const auto eq = word.find('=');
            if (eq == std::string::npos) throw FormatError("malformed controller header field '" + word + "'");
            const auto key = word.substr(0, eq), value = word.substr(eq + 1);
            try {
                if (key == "objective") {
                    b.objective.kind = parse_objective_kind(value);
                    have_kind = true;
                } else if (key == "seed") {
                    b.seed = std::stoull(value);
                } else if (key == "hw_lo") {
                    lo = std::stoi(value);
                } else if (key == "hw_hi") {
                    hi = std::stoi(value);
                }
            } catch (const std::exception &e) {
                throw FormatError("bad controller header field '" + word + "': " + e.what());
            }
        }
        if (!have_kind) throw FormatError("controller header lacks an objective");
        if (lo.has_value() != hi.has_value()) throw FormatError("controller header has only one of hw_lo/hw_hi");
        if (lo) b.objective.range = WeightRange{*lo, *hi};
        return b;
    }
    throw FormatError("missing '# controller objective=... seed=...' header line");
}

// ---------------------------------------------------------------------------
// Pattern importance diagnostic
// ---------------------------------------------------------------------------

/// For each pattern and qubit: sum of |theta| over generators that touch the qubit and lie entirely
/// inside the pattern's one-bits. A heuristic per-pattern, per-qubit importance score.
inline std::vector<std::vector<double>> pattern_importance(const IQPCircuit &c, std::span<const Bits> patterns) {
    std::vector<std::vector<double>> out(patterns.size(), std::vector<double>(c.n_qubits(), 0.0));
    for (std::size_t p = 0; p < patterns.size(); ++p) {
        for (std::size_t j = 0; j < c.size(); ++j) {
            const Bits g = c.generator(j).mask();
            if ((g & ~patterns[p]) != 0) continue;
            for (unsigned q : c.generator(j).qubits()) out[p][q] += std::abs(c.theta(j));
        }
    }
    return out;
}

}  // namespace conquer
