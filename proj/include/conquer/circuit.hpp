#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <memory>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "conquer/bits.hpp"
#include "conquer/errors.hpp"
#include "conquer/rng.hpp"

namespace conquer {

/// Qubit subset g of a commuting gate exp(i theta X_g).
class Generator {
  public:
    constexpr Generator() = default;
    constexpr explicit Generator(Bits mask) : mask_(mask) {}

    /// Builds from qubit indices in any order; duplicates and indices >= 64 are rejected.
    static Generator from_qubits(std::span<const unsigned> qubits) {
        Bits mask = 0;
        for (unsigned q : qubits) {
            if (q >= kMaxQubits) throw ArgumentError("qubit index " + std::to_string(q) + " exceeds the 64-qubit cap");
            const Bits bit = Bits{1} << q;
            if (mask & bit) throw ArgumentError("duplicate qubit index " + std::to_string(q) + " in generator");
            mask |= bit;
        }
        if (mask == 0) throw ArgumentError("generator must act on at least one qubit");
        return Generator(mask);
    }
    static Generator from_qubits(std::initializer_list<unsigned> qubits) {
        return from_qubits(std::span<const unsigned>(qubits.begin(), qubits.size()));
    }

    constexpr Bits mask() const { return mask_; }
    constexpr int order() const { return std::popcount(mask_); }
    constexpr bool contains(unsigned q) const { return (mask_ >> q) & 1; }

    /// Strictly increasing qubit indices.
    std::vector<unsigned> qubits() const {
        std::vector<unsigned> out;
        out.reserve(static_cast<std::size_t>(order()));
        for (Bits m = mask_; m; m &= m - 1) out.push_back(static_cast<unsigned>(std::countr_zero(m)));
        return out;
    }

    constexpr bool valid_for(unsigned n_qubits) const { return mask_ != 0 && (mask_ & ~low_mask(n_qubits)) == 0; }

    friend constexpr bool operator==(Generator a, Generator b) { return a.mask_ == b.mask_; }

  private:
    Bits mask_ = 0;
};

/// Canonical generator order: by gate order, then lexicographically by sorted qubit indices.
inline constexpr bool canonical_less(Generator a, Generator b) {
    if (a.order() != b.order()) return a.order() < b.order();
    const Bits diff = a.mask() ^ b.mask();
    if (diff == 0) return false;
    // Equal-size sets agree below the lowest differing qubit; the set holding it sorts first.
    return (a.mask() & (diff & (~diff + 1))) != 0;
}

/// Parameter initializer: called once per generator in circuit order.
using ParameterInit = std::function<double(Generator, std::size_t index)>;

namespace init {

inline ParameterInit zeros() {
    return [](Generator, std::size_t) { return 0.0; };
}

inline ParameterInit constant(double v) {
    return [v](Generator, std::size_t) { return v; };
}

/// Gaussian with standard deviation scale / sqrt(C(n-1, k-1)) for an order-k gate,
/// so every order contributes the same phase variance per qubit.
inline ParameterInit order_balanced_gaussian(unsigned n_qubits, double scale, std::uint64_t seed) {
    auto rng = std::make_shared<Rng>(make_stream(seed, {0x1a17}));
    return [rng, n_qubits, scale](Generator g, std::size_t) {
        const int k = g.order();
        double count = 1.0;
        for (int i = 1; i < k; ++i) count = count * static_cast<double>(n_qubits - static_cast<unsigned>(i)) / i;
        return normal(*rng, 0.0, scale / std::sqrt(count));
    };
}

}  // namespace init

/// Parameterized IQP circuit: prod_j exp(i theta_j X_{g_j}) applied to |0^n>, measured in Z.
class IQPCircuit {
  public:
    IQPCircuit() = default;

    IQPCircuit(unsigned n_qubits, std::vector<Generator> generators, std::vector<double> theta)
        : n_(n_qubits), gens_(std::move(generators)), theta_(std::move(theta)) {
        if (n_ == 0 || n_ > kMaxQubits) throw ArgumentError("qubit count must be in [1, 64], got " + std::to_string(n_));
        if (gens_.size() != theta_.size()) {
            throw ArgumentError("parameter count " + std::to_string(theta_.size()) + " does not match gate count " +
                                std::to_string(gens_.size()));
        }
        for (const auto &g : gens_) {
            if (!g.valid_for(n_)) throw ArgumentError("generator invalid for " + std::to_string(n_) + " qubits");
        }
        std::vector<Bits> masks(gens_.size());
        std::transform(gens_.begin(), gens_.end(), masks.begin(), [](Generator g) { return g.mask(); });
        std::sort(masks.begin(), masks.end());
        if (std::adjacent_find(masks.begin(), masks.end()) != masks.end()) {
            throw ArgumentError("duplicate generator in circuit; merge parameters before construction");
        }
    }

    /// Empty circuit (identity) on n qubits.
    explicit IQPCircuit(unsigned n_qubits) : IQPCircuit(n_qubits, {}, {}) {}

    unsigned n_qubits() const { return n_; }
    std::size_t size() const { return gens_.size(); }
    bool empty() const { return gens_.empty(); }
    const std::vector<Generator> &generators() const { return gens_; }
    const std::vector<double> &theta() const { return theta_; }
    Generator generator(std::size_t j) const { return gens_[j]; }
    double theta(std::size_t j) const { return theta_[j]; }

    /// Index of g or size() when absent.
    std::size_t find(Generator g) const {
        auto it = std::find(gens_.begin(), gens_.end(), g);
        return static_cast<std::size_t>(it - gens_.begin());
    }

    IQPCircuit with_theta(std::vector<double> theta) const { return IQPCircuit(n_, gens_, std::move(theta)); }

    int max_order() const {
        int m = 0;
        for (auto g : gens_) m = std::max(m, g.order());
        return m;
    }

    friend bool operator==(const IQPCircuit &a, const IQPCircuit &b) {
        return a.n_ == b.n_ && a.gens_ == b.gens_ && a.theta_ == b.theta_;
    }

  private:
    unsigned n_ = 0;
    std::vector<Generator> gens_;
    std::vector<double> theta_;
};

inline std::size_t binomial(unsigned n, unsigned k) {
    if (k > n) return 0;
    std::size_t r = 1;
    for (unsigned i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

/// Number of generators of a full circuit: sum_{k=1..max_order} C(n, k).
inline std::size_t full_order_gate_count(unsigned n, unsigned max_order) {
    std::size_t total = 0;
    for (unsigned k = 1; k <= max_order; ++k) total += binomial(n, k);
    return total;
}

/// All qubit subsets of size 1..max_order, canonically ordered.
inline IQPCircuit build_full_order_circuit(unsigned n, unsigned max_order, const ParameterInit &init = init::zeros()) {
    if (max_order < 1 || max_order > n || n > kMaxQubits) {
        throw ArgumentError("need 1 <= max_order <= n <= 64, got n=" + std::to_string(n) +
                            " max_order=" + std::to_string(max_order));
    }
    std::vector<Generator> gens;
    gens.reserve(full_order_gate_count(n, max_order));
    std::vector<unsigned> idx;
    for (unsigned k = 1; k <= max_order; ++k) {
        idx.resize(k);
        for (unsigned i = 0; i < k; ++i) idx[i] = i;
        for (;;) {
            Bits mask = 0;
            for (unsigned q : idx) mask |= Bits{1} << q;
            gens.emplace_back(mask);
            // Advance to the next combination in lexicographic order.
            int i = static_cast<int>(k) - 1;
            while (i >= 0 && idx[static_cast<unsigned>(i)] == n - k + static_cast<unsigned>(i)) --i;
            if (i < 0) break;
            ++idx[static_cast<unsigned>(i)];
            for (unsigned j = static_cast<unsigned>(i) + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
        }
    }
    std::vector<double> theta(gens.size());
    for (std::size_t j = 0; j < gens.size(); ++j) theta[j] = init(gens[j], j);
    return IQPCircuit(n, std::move(gens), std::move(theta));
}

/// Same gates and parameters in canonical order. Idempotent.
inline IQPCircuit canonicalize(const IQPCircuit &c) {
    std::vector<std::size_t> perm(c.size());
    for (std::size_t j = 0; j < perm.size(); ++j) perm[j] = j;
    std::sort(perm.begin(), perm.end(),
              [&](std::size_t a, std::size_t b) { return canonical_less(c.generator(a), c.generator(b)); });
    std::vector<Generator> gens(c.size());
    std::vector<double> theta(c.size());
    for (std::size_t j = 0; j < perm.size(); ++j) {
        gens[j] = c.generator(perm[j]);
        theta[j] = c.theta(perm[j]);
    }
    return IQPCircuit(c.n_qubits(), std::move(gens), std::move(theta));
}

/// Direct connection: shared generators add parameters, the rest are carried over.
/// The result is canonically ordered.
inline IQPCircuit combine_direct(const IQPCircuit &base, const IQPCircuit &ctrl) {
    if (base.n_qubits() != ctrl.n_qubits()) {
        throw ArgumentError("cannot combine circuits on " + std::to_string(base.n_qubits()) + " and " +
                            std::to_string(ctrl.n_qubits()) + " qubits");
    }
    const IQPCircuit a = canonicalize(base);
    const IQPCircuit b = canonicalize(ctrl);
    std::vector<Generator> gens;
    std::vector<double> theta;
    gens.reserve(a.size() + b.size());
    theta.reserve(a.size() + b.size());
    std::size_t i = 0, j = 0;
    while (i < a.size() || j < b.size()) {
        if (j == b.size() || (i < a.size() && canonical_less(a.generator(i), b.generator(j)))) {
            gens.push_back(a.generator(i));
            theta.push_back(a.theta(i++));
        } else if (i == a.size() || canonical_less(b.generator(j), a.generator(i))) {
            gens.push_back(b.generator(j));
            theta.push_back(b.theta(j++));
        } else {
            gens.push_back(a.generator(i));
            theta.push_back(a.theta(i++) + b.theta(j++));
        }
    }
    return IQPCircuit(a.n_qubits(), std::move(gens), std::move(theta));
}

/// Implicit connection: appends each extra generator not already present, at parameter 0.
/// Base gates keep their positions, so base parameter indices stay valid.
inline IQPCircuit embed_implicit(const IQPCircuit &base, std::span<const Generator> extra) {
    std::vector<Generator> gens = base.generators();
    std::vector<double> theta = base.theta();
    std::vector<Bits> present(gens.size());
    std::transform(gens.begin(), gens.end(), present.begin(), [](Generator g) { return g.mask(); });
    std::sort(present.begin(), present.end());
    for (auto g : extra) {
        if (!g.valid_for(base.n_qubits())) {
            throw ArgumentError("extra generator invalid for " + std::to_string(base.n_qubits()) + " qubits");
        }
        auto it = std::lower_bound(present.begin(), present.end(), g.mask());
        if (it != present.end() && *it == g.mask()) continue;
        present.insert(it, g.mask());
        gens.push_back(g);
        theta.push_back(0.0);
    }
    return IQPCircuit(base.n_qubits(), std::move(gens), std::move(theta));
}

// ---------------------------------------------------------------------------
// Text format:
//   # optional comment lines
//   iqp <n_qubits> <n_gates>
//   <q0> <q1> ... <theta>        (one line per gate)
// Parameters use the shortest decimal form that round-trips exactly.
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw FormatError("malformed number '" + std::string(s) + "'");
    }
    return v;
}

inline void write_circuit(std::ostream &out, const IQPCircuit &c, std::span<const std::string> comments = {}) {
    for (const auto &line : comments) out << "# " << line << '\n';
    out << "iqp " << c.n_qubits() << ' ' << c.size() << '\n';
    for (std::size_t j = 0; j < c.size(); ++j) {
        for (unsigned q : c.generator(j).qubits()) out << q << ' ';
        out << format_double(c.theta(j)) << '\n';
    }
}

inline std::string to_text(const IQPCircuit &c) {
    std::ostringstream os;
    write_circuit(os, c);
    return os.str();
}

/// Parses the text format. Comment lines ('#') and blank lines are skipped;
/// comment bodies are appended to *comments when given.
inline IQPCircuit read_circuit(std::istream &in, std::vector<std::string> *comments = nullptr) {
    std::string line;
    auto next_line = [&]() -> bool {
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            if (line[0] == '#') {
                if (comments) comments->push_back(line.size() > 2 ? line.substr(2) : std::string{});
                continue;
            }
            return true;
        }
        return false;
    };
    if (!next_line()) throw FormatError("circuit file is empty");
    std::istringstream header(line);
    std::string magic;
    long long n = -1, m = -1;
    if (!(header >> magic >> n >> m) || magic != "iqp" || n <= 0 || m < 0) {
        throw FormatError("expected header 'iqp <n_qubits> <n_gates>', got '" + line + "'");
    }
    std::vector<Generator> gens;
    std::vector<double> theta;
    gens.reserve(static_cast<std::size_t>(m));
    theta.reserve(static_cast<std::size_t>(m));
    for (long long j = 0; j < m; ++j) {
        if (!next_line()) throw FormatError("circuit file truncated at gate " + std::to_string(j));
        std::istringstream ls(line);
        std::vector<std::string> tokens;
        for (std::string t; ls >> t;) tokens.push_back(t);
        if (tokens.size() < 2) throw FormatError("gate line needs qubits and a parameter: '" + line + "'");
        std::vector<unsigned> qubits;
        for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
            unsigned q = 0;
            auto res = std::from_chars(tokens[t].data(), tokens[t].data() + tokens[t].size(), q);
            if (res.ec != std::errc() || res.ptr != tokens[t].data() + tokens[t].size()) {
                throw FormatError("bad qubit index '" + tokens[t] + "'");
            }
            qubits.push_back(q);
        }
        gens.push_back(Generator::from_qubits(qubits));
        theta.push_back(parse_double(tokens.back()));
    }
    if (next_line()) throw FormatError("trailing content after " + std::to_string(m) + " gates: '" + line + "'");
    return IQPCircuit(static_cast<unsigned>(n), std::move(gens), std::move(theta));
}

inline IQPCircuit from_text(const std::string &text) {
    std::istringstream is(text);
    return read_circuit(is);
}

}  // namespace conquer
