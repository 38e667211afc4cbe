#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "conquer/bits.hpp"
#include "conquer/circuit.hpp"
#include "conquer/datasets.hpp"
#include "conquer/errors.hpp"
#include "conquer/evaluator.hpp"
#include "conquer/rng.hpp"
#include "conquer/walsh.hpp"

namespace conquer {

/// Gaussian kernel over Hamming distance, k(x, y) = exp(-d_H(x, y) / (2 sigma^2)).
/// Per qubit it factors as a + b z(x) z(y) with a = (1 + r) / 2, b = (1 - r) / 2, r = exp(-1 / (2 sigma^2)),
/// so MMD^2 = sum_S a^{n-|S|} b^{|S|} (<Z_S>_p - <Z_S>_q)^2.
class KernelConfig {
public:
    explicit KernelConfig(double sigma) : sigma_(sigma) {
        if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ArgumentError("kernel bandwidth must be positive");
        const double b = inclusion_probability();
        if (!(b > 0.0 && b < 0.5)) throw ArgumentError("kernel bandwidth gives a degenerate inclusion probability");
    }

    /// sigma^2 = n / 8.
    static KernelConfig for_qubits(unsigned n) { return KernelConfig(std::sqrt(n / 8.0)); }

    double sigma() const { return sigma_; }
    double ratio() const { return std::exp(-1.0 / (2.0 * sigma_ * sigma_)); }
    double inclusion_probability() const { return (1.0 - ratio()) / 2.0; }
    double kernel(int distance) const { return std::pow(ratio(), distance); }

    /// Weight a^{n-|S|} b^{|S|} of subset S in the expansion.
    double weight(unsigned n, int order) const {
        const double b = inclusion_probability();
        return std::pow(1.0 - b, static_cast<int>(n) - order) * std::pow(b, order);
    }

    /// Probability the per-qubit sampler produces the empty subset, a^n.
    double empty_probability(unsigned n) const { return std::pow(1.0 - inclusion_probability(), static_cast<int>(n)); }

private:
    double sigma_;
};

struct SubsetBatch {
    unsigned n_qubits = 0;
    std::vector<Observable> subsets;
};

/// Each qubit joins S independently with probability b; empty draws are discarded and redrawn.
inline SubsetBatch draw_subsets(unsigned n, const KernelConfig &kcfg, std::size_t count, Rng &rng) {
    if (n == 0 || n > kMaxQubits) throw ArgumentError("subset sampler needs 1..64 qubits");
    if (count == 0) throw ArgumentError("subset batch size must be positive");
    const double b = kcfg.inclusion_probability();
    SubsetBatch batch{n, {}};
    batch.subsets.reserve(count);
    while (batch.subsets.size() < count) {
        Bits s = 0;
        for (unsigned q = 0; q < n; ++q) {
            if (uniform01(rng) < b) s |= Bits{1} << q;
        }
        if (s != 0) batch.subsets.push_back({s});
    }
    return batch;
}

/// Value and gradient of an objective, with the two parts of a penalized loss kept apart.
struct LossReport {
    double value = 0.0;
    double std_error = 0.0;  // 0 for exact evaluations
    std::vector<double> gradient;
    double mmd_term = 0.0;
    double variance_term = 0.0;
};

inline double empirical_expval(const BitstringDataset &data, Observable s) {
    if (data.samples.empty()) throw ArgumentError("empirical_expval needs a nonempty dataset");
    long long acc = 0;
    for (auto x : data.samples) acc += parity(x & s.support) ? -1 : 1;
    return static_cast<double>(acc) / static_cast<double>(data.size());
}

/// Empirical distribution of the data as a dense 2^n table.
inline std::vector<double> empirical_distribution(const BitstringDataset &data) {
    detail::require_exact_capacity(data.n, kExactQubitCap, "empirical_distribution");
    std::vector<double> q(std::size_t{1} << data.n, 0.0);
    const double w = 1.0 / static_cast<double>(data.size());
    for (auto x : data.samples) q[static_cast<std::size_t>(x)] += w;
    return q;
}

enum class MomentSource { monte_carlo, exact };

namespace detail {

inline void require_data_matches(const IQPCircuit &c, const BitstringDataset &data) {
    if (data.samples.empty()) throw ArgumentError("MMD needs a nonempty dataset");
    if (data.n != c.n_qubits()) {
        throw ArgumentError("dataset has " + std::to_string(data.n) + "-bit strings but the circuit has " +
                            std::to_string(c.n_qubits()) + " qubits");
    }
}

}  // namespace detail

/// Stochastic MMD^2: (1 - a^n) / B * sum_S (<Z_S>_model - <Z_S>_data)^2 over a fresh subset batch.
/// The (1 - a^n) factor undoes the conditioning on S nonempty, making the batch mean unbiased for the
/// kernel MMD^2 when the model moments are exact. Monte-Carlo moments add an O(1 / mc_samples) bias.
inline LossReport mmd_loss(const IQPCircuit &c, const BitstringDataset &data, const KernelConfig &kcfg,
                           std::size_t n_subsets, std::size_t mc_samples, Rng &rng,
                           MomentSource moments = MomentSource::monte_carlo) {
    detail::require_data_matches(c, data);
    if (n_subsets == 0) throw ArgumentError("subset batch size must be positive");
    if (moments == MomentSource::monte_carlo && mc_samples == 0) throw ArgumentError("mc_samples must be positive");
    const unsigned n = c.n_qubits();
    const auto batch = draw_subsets(n, kcfg, n_subsets, rng);
    const double scale = 1.0 - kcfg.empty_probability(n);
    const double per = scale / static_cast<double>(n_subsets);

    LossReport rep;
    rep.gradient.assign(c.size(), 0.0);
    std::vector<double> terms(n_subsets);

    if (moments == MomentSource::exact) {
        const auto st = exact_state(c);
        const auto z = z_expectations(st.distribution);
        // dL/dp(x) = sum_S per * 2 D_S (-1)^{<x, S>} = WHT[v](x) with v sparse on the batch.
        std::vector<double> v(z.size(), 0.0);
        for (std::size_t i = 0; i < n_subsets; ++i) {
            const auto s = batch.subsets[i];
            const double d = z[static_cast<std::size_t>(s.support)] - empirical_expval(data, s);
            terms[i] = d * d;
            v[static_cast<std::size_t>(s.support)] += per * 2.0 * d;
        }
        fwht(std::span<double>(v));
        rep.gradient = exact_gradient(c, st, v);
    } else {
        for (std::size_t i = 0; i < n_subsets; ++i) {
            const auto s = batch.subsets[i];
            const auto [m, g] = expval_and_grad_mc(c, s, mc_samples, rng);
            const double d = m.value - empirical_expval(data, s);
            terms[i] = d * d;
            for (std::size_t j = 0; j < c.size(); ++j) rep.gradient[j] += per * 2.0 * d * g.value[j];
        }
    }
    const double mean = std::accumulate(terms.begin(), terms.end(), 0.0) / static_cast<double>(n_subsets);
    double var = 0.0;
    for (double t : terms) var += (t - mean) * (t - mean);
    var = n_subsets > 1 ? var / static_cast<double>(n_subsets - 1) : 0.0;
    rep.value = scale * mean;
    rep.std_error = scale * std::sqrt(var / static_cast<double>(n_subsets));
    rep.mmd_term = rep.value;
    return rep;
}

/// Data-side quantities for the exact MMD, reusable across training steps.
struct ExactMmdTarget {
    unsigned n_qubits = 0;
    std::vector<double> data_moments;  // <Z_S>_data for every S
    std::vector<double> weights;       // a^{n-|S|} b^{|S|}; weight of S = 0 is 0

    ExactMmdTarget(const BitstringDataset &data, const KernelConfig &kcfg) : n_qubits(data.n) {
        data_moments = empirical_distribution(data);
        fwht(std::span<double>(data_moments));
        weights.resize(data_moments.size());
        for (std::size_t s = 0; s < weights.size(); ++s) weights[s] = kcfg.weight(n_qubits, popcount(s));
        weights[0] = 0.0;
    }
};

/// Full kernel MMD^2 between the circuit's Born distribution and the data, with its exact gradient.
inline LossReport mmd_exact(const IQPCircuit &c, const ExactMmdTarget &target, const ExactState &st) {
    if (target.n_qubits != c.n_qubits()) throw ArgumentError("MMD target and circuit disagree on qubit count");
    const auto z = z_expectations(st.distribution);
    std::vector<double> v(z.size());
    LossReport rep;
    for (std::size_t s = 0; s < z.size(); ++s) {
        const double d = z[s] - target.data_moments[s];
        rep.value += target.weights[s] * d * d;
        v[s] = 2.0 * target.weights[s] * d;
    }
    fwht(std::span<double>(v));
    rep.gradient = exact_gradient(c, st, v);
    rep.mmd_term = rep.value;
    return rep;
}

inline LossReport mmd_exact(const IQPCircuit &c, const ExactMmdTarget &target) {
    return mmd_exact(c, target, exact_state(c));
}

inline LossReport mmd_exact(const IQPCircuit &c, const BitstringDataset &data, const KernelConfig &kcfg) {
    detail::require_data_matches(c, data);
    return mmd_exact(c, ExactMmdTarget(data, kcfg));
}

// ---------------------------------------------------------------------------
// Mode probabilities and the variance-penalized loss
// ---------------------------------------------------------------------------

/// Nearest-pattern assignment of every n-bit string; ties go to the lowest pattern index.
struct ModeMap {
    unsigned n_qubits = 0;
    std::vector<Bits> patterns;
    std::vector<std::uint32_t> owner;  // indexed by bitstring

    ModeMap(unsigned n, std::vector<Bits> pats) : n_qubits(n), patterns(std::move(pats)) {
        detail::require_exact_capacity(n, kExactQubitCap, "mode assignment");
        if (patterns.empty()) throw ArgumentError("mode patterns must be nonempty");
        for (std::size_t i = 0; i < patterns.size(); ++i) {
            if (patterns[i] & ~low_mask(n)) throw ArgumentError("mode pattern wider than the qubit count");
            for (std::size_t j = 0; j < i; ++j) {
                if (patterns[i] == patterns[j]) throw ArgumentError("mode patterns must be pairwise distinct");
            }
        }
        owner.resize(std::size_t{1} << n);
        for (std::size_t x = 0; x < owner.size(); ++x) {
            std::uint32_t best = 0;
            int best_d = hamming_distance(x, patterns[0]);
            for (std::uint32_t k = 1; k < patterns.size(); ++k) {
                const int d = hamming_distance(x, patterns[k]);
                if (d < best_d) best = k, best_d = d;
            }
            owner[x] = best;
        }
    }
};

inline std::vector<double> mode_probabilities(const BornDistribution &dist, const ModeMap &modes) {
    if (dist.n_qubits != modes.n_qubits) throw ArgumentError("distribution and mode map disagree on qubit count");
    std::vector<double> m(modes.patterns.size(), 0.0);
    for (std::size_t x = 0; x < dist.size(); ++x) m[modes.owner[x]] += dist.probabilities[x];
    return m;
}

inline std::vector<double> mode_probabilities(const BornDistribution &dist, const std::vector<Bits> &patterns) {
    return mode_probabilities(dist, ModeMap(dist.n_qubits, patterns));
}

inline double population_variance(std::span<const double> v) {
    if (v.empty()) return 0.0;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return acc / static_cast<double>(v.size());
}

inline constexpr unsigned kBiasQubitCap = 20;

enum class MmdEstimator {
    subsets_mc,     // sampled subsets, Monte-Carlo model moments
    subsets_exact,  // sampled subsets, exact model moments
    exact,          // full sum over all subsets
};

enum class VarianceGradient { spsa, exact };

struct BiasOptions {
    MmdEstimator estimator = MmdEstimator::subsets_mc;
    std::size_t subsets = 64;
    std::size_t mc_samples = 2000;
    VarianceGradient variance_gradient = VarianceGradient::spsa;
    double spsa_delta = 0.01;
    std::size_t spsa_repeats = 1;  // independent perturbations averaged per step
};

/// Loss for bias mitigation: MMD^2 + lambda * Var(mode probabilities).
/// The variance term is evaluated exactly; its gradient is SPSA by default
/// (two perturbed full distributions per repeat) or the exact adjoint.
inline LossReport bias_loss(const IQPCircuit &c, const BitstringDataset &data, const ModeMap &modes, double lambda,
                            const KernelConfig &kcfg, const BiasOptions &opt, Rng &rng,
                            const ExactMmdTarget *target = nullptr) {
    detail::require_data_matches(c, data);
    detail::require_exact_capacity(c.n_qubits(), kBiasQubitCap, "bias_loss");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ArgumentError("lambda must be nonnegative");
    if (!(opt.spsa_delta > 0.0)) throw ArgumentError("spsa_delta must be positive");
    if (opt.spsa_repeats == 0) throw ArgumentError("spsa_repeats must be positive");
    if (modes.n_qubits != c.n_qubits()) throw ArgumentError("mode map and circuit disagree on qubit count");

    const auto st = exact_state(c);
    const auto m = mode_probabilities(st.distribution, modes);
    const double var = population_variance(m);

    LossReport rep;
    std::vector<double> extra_dl_dp;  // exact variance gradient folded into the adjoint pass
    if (lambda > 0.0 && opt.variance_gradient == VarianceGradient::exact) {
        const double mean = std::accumulate(m.begin(), m.end(), 0.0) / static_cast<double>(m.size());
        extra_dl_dp.resize(st.distribution.size());
        for (std::size_t x = 0; x < extra_dl_dp.size(); ++x) {
            extra_dl_dp[x] = lambda * 2.0 * (m[modes.owner[x]] - mean) / static_cast<double>(m.size());
        }
    }

    switch (opt.estimator) {
        case MmdEstimator::subsets_mc:
            rep = mmd_loss(c, data, kcfg, opt.subsets, opt.mc_samples, rng, MomentSource::monte_carlo);
            break;
        case MmdEstimator::subsets_exact:
            rep = mmd_loss(c, data, kcfg, opt.subsets, opt.mc_samples, rng, MomentSource::exact);
            break;
        case MmdEstimator::exact:
            if (target) {
                rep = mmd_exact(c, *target, st);
            } else {
                rep = mmd_exact(c, ExactMmdTarget(data, kcfg), st);
            }
            break;
    }
    if (!extra_dl_dp.empty()) {
        const auto g = exact_gradient(c, st, extra_dl_dp);
        for (std::size_t j = 0; j < g.size(); ++j) rep.gradient[j] += g[j];
    }
    if (lambda > 0.0 && opt.variance_gradient == VarianceGradient::spsa) {
        std::vector<double> theta(c.theta().begin(), c.theta().end());
        std::vector<double> delta(theta.size()), plus(theta.size()), minus(theta.size());
        std::bernoulli_distribution coin(0.5);
        const double w = lambda / static_cast<double>(opt.spsa_repeats);
        for (std::size_t r = 0; r < opt.spsa_repeats; ++r) {
            for (std::size_t j = 0; j < theta.size(); ++j) {
                delta[j] = coin(rng) ? 1.0 : -1.0;
                plus[j] = theta[j] + opt.spsa_delta * delta[j];
                minus[j] = theta[j] - opt.spsa_delta * delta[j];
            }
            const double fp = population_variance(mode_probabilities(full_distribution(c.with_theta(plus)), modes));
            const double fm = population_variance(mode_probabilities(full_distribution(c.with_theta(minus)), modes));
            const double slope = (fp - fm) / (2.0 * opt.spsa_delta);
            for (std::size_t j = 0; j < theta.size(); ++j) rep.gradient[j] += w * slope * delta[j];
        }
    }
    rep.mmd_term = rep.value;
    rep.variance_term = var;
    rep.value = rep.mmd_term + lambda * var;
    return rep;
}

inline LossReport bias_loss(const IQPCircuit &c, const BitstringDataset &data, const std::vector<Bits> &patterns,
                            double lambda, const KernelConfig &kcfg, const BiasOptions &opt, Rng &rng) {
    detail::require_exact_capacity(c.n_qubits(), kBiasQubitCap, "bias_loss");
    return bias_loss(c, data, ModeMap(c.n_qubits(), patterns), lambda, kcfg, opt, rng);
}

}  // namespace conquer
