#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "conquer/bits.hpp"
#include "conquer/circuit.hpp"
#include "conquer/errors.hpp"
#include "conquer/parallel.hpp"
#include "conquer/rng.hpp"
#include "conquer/walsh.hpp"

namespace conquer {

/// Dense exact path limit (2^26 complex amplitudes is 1 GiB).
inline constexpr unsigned kExactQubitCap = 26;
/// parameter_influence needs two dense passes.
inline constexpr unsigned kInfluenceQubitCap = 20;

/// Tensor product of Pauli-Z on the qubits of `support`; an empty support is the identity.
struct Observable {
    Bits support = 0;

    static Observable on(std::initializer_list<unsigned> qubits) {
        Bits m = 0;
        for (unsigned q : qubits) m |= Bits{1} << q;
        return {m};
    }
    bool valid_for(unsigned n) const { return (support & ~low_mask(n)) == 0; }
};

struct Estimate {
    double value = 0.0;
    double std_error = 0.0;
    std::size_t n_samples = 0;
};

/// Per-component Monte-Carlo gradient with standard errors.
struct GradientEstimate {
    std::vector<double> value;
    std::vector<double> std_error;
    std::size_t n_samples = 0;
};

struct BornDistribution {
    unsigned n_qubits = 0;
    std::vector<double> probabilities;  // indexed by bitstring mask

    double operator[](Bits x) const { return probabilities[static_cast<std::size_t>(x)]; }
    std::size_t size() const { return probabilities.size(); }
};

namespace detail {

inline void require_exact_capacity(unsigned n, unsigned cap, const char *what) {
    if (n > cap) {
        throw CapacityError(std::string(what) + " supports at most " + std::to_string(cap) + " qubits, got " +
                            std::to_string(n));
    }
}

inline void require_observable(const IQPCircuit &c, Observable s) {
    if (!s.valid_for(c.n_qubits())) throw ArgumentError("observable support exceeds the circuit's qubit count");
}

/// Gates anticommuting with Z_S: |g_j & S| odd. Only these gates affect <Z_S>.
struct ActiveSet {
    std::vector<std::size_t> index;
    std::vector<Bits> mask;
    std::vector<double> theta;
};

inline ActiveSet active_gates(const IQPCircuit &c, Observable s) {
    ActiveSet a;
    for (std::size_t j = 0; j < c.size(); ++j) {
        if (parity(c.generator(j).mask() & s.support)) {
            a.index.push_back(j);
            a.mask.push_back(c.generator(j).mask());
            a.theta.push_back(c.theta(j));
        }
    }
    return a;
}

inline constexpr std::size_t kMcBlock = 1024;

}  // namespace detail

/// Phase phi(w) = sum_j theta_j (-1)^{<g_j, w>} for every w, by Gray-code walk.
/// Stepping to the next Gray code flips one bit b and negates exactly the gates touching b.
inline std::vector<double> phases_gray(const IQPCircuit &c) {
    const unsigned n = c.n_qubits();
    detail::require_exact_capacity(n, kExactQubitCap, "phase table");
    std::vector<std::vector<std::size_t>> touching(n);
    for (std::size_t j = 0; j < c.size(); ++j) {
        for (unsigned q : c.generator(j).qubits()) touching[q].push_back(j);
    }
    std::vector<double> sign(c.size(), 1.0);
    const std::size_t size = std::size_t{1} << n;
    std::vector<double> phi(size);
    double current = std::accumulate(c.theta().begin(), c.theta().end(), 0.0);
    phi[0] = current;
    Bits w = 0;
    for (std::size_t i = 1; i < size; ++i) {
        const unsigned b = static_cast<unsigned>(std::countr_zero(i));
        w ^= Bits{1} << b;
        for (std::size_t j : touching[b]) {
            sign[j] = -sign[j];
            current += 2.0 * sign[j] * c.theta(j);
        }
        phi[static_cast<std::size_t>(w)] = current;
    }
    return phi;
}

/// Phase table as the Walsh transform of the parameters placed at their generator masks.
inline std::vector<double> phases_walsh(const IQPCircuit &c) {
    const unsigned n = c.n_qubits();
    detail::require_exact_capacity(n, kExactQubitCap, "phase table");
    std::vector<double> phi(std::size_t{1} << n, 0.0);
    for (std::size_t j = 0; j < c.size(); ++j) phi[static_cast<std::size_t>(c.generator(j).mask())] += c.theta(j);
    fwht(std::span<double>(phi));
    return phi;
}

/// Picks the cheaper phase route: Gray-code costs ~2^n * (gates per qubit), Walsh ~2^n * n.
inline std::vector<double> phase_table(const IQPCircuit &c) {
    std::size_t incidences = 0;
    for (auto g : c.generators()) incidences += static_cast<std::size_t>(g.order());
    const std::size_t per_qubit = incidences / c.n_qubits();
    return per_qubit >= c.n_qubits() ? phases_walsh(c) : phases_gray(c);
}

/// Output amplitudes <x|U|0^n> = 2^{-n} WHT[exp(i phi)](x).
inline std::vector<std::complex<double>> amplitudes(const IQPCircuit &c) {
    const auto phi = phase_table(c);
    std::vector<std::complex<double>> amp(phi.size());
    for (std::size_t w = 0; w < phi.size(); ++w) amp[w] = std::polar(1.0, phi[w]);
    fwht(std::span<std::complex<double>>(amp));
    const double scale = 1.0 / static_cast<double>(phi.size());
    for (auto &a : amp) a *= scale;
    return amp;
}

inline BornDistribution full_distribution(const IQPCircuit &c) {
    detail::require_exact_capacity(c.n_qubits(), kExactQubitCap, "full_distribution");
    const auto amp = amplitudes(c);
    BornDistribution d{c.n_qubits(), std::vector<double>(amp.size())};
    for (std::size_t x = 0; x < amp.size(); ++x) d.probabilities[x] = std::norm(amp[x]);
    return d;
}

/// <Z_S> for every S at once: the Walsh transform of the distribution.
inline std::vector<double> z_expectations(const BornDistribution &d) {
    std::vector<double> z = d.probabilities;
    fwht(std::span<double>(z));
    return z;
}

inline double expval(const BornDistribution &d, Observable s) {
    double acc = 0.0;
    for (std::size_t x = 0; x < d.size(); ++x) {
        acc += parity(static_cast<Bits>(x) & s.support) ? -d.probabilities[x] : d.probabilities[x];
    }
    return acc;
}

inline double expval_exact(const IQPCircuit &c, Observable s) {
    detail::require_exact_capacity(c.n_qubits(), kExactQubitCap, "expval_exact");
    detail::require_observable(c, s);
    if (s.support == 0) return 1.0;
    return expval(full_distribution(c), s);
}

/// Unbiased Monte-Carlo estimate of <Z_S> = E_w[cos(2 sum_{j in A(S)} theta_j (-1)^{<g_j, w>})],
/// w uniform over {0,1}^n. Deterministic (stderr 0) when A(S) is empty.
inline Estimate expval_mc(const IQPCircuit &c, Observable s, std::size_t n_samples, Rng &rng) {
    detail::require_observable(c, s);
    if (n_samples == 0) throw ArgumentError("expval_mc needs at least one sample");
    const auto active = detail::active_gates(c, s);
    if (active.index.empty()) return {1.0, 0.0, n_samples};
    const Bits wmask = low_mask(c.n_qubits());
    const std::uint64_t seed = rng();
    const std::size_t blocks = (n_samples + detail::kMcBlock - 1) / detail::kMcBlock;
    std::vector<double> sums(blocks), sumsqs(blocks);
    parallel_blocks(blocks, [&](std::size_t b) {
        Rng local = make_stream(seed, {b});
        const std::size_t count = std::min(detail::kMcBlock, n_samples - b * detail::kMcBlock);
        double sum = 0.0, sumsq = 0.0;
        for (std::size_t t = 0; t < count; ++t) {
            const Bits w = local() & wmask;
            double v = 0.0;
            for (std::size_t j = 0; j < active.mask.size(); ++j) {
                v += parity(active.mask[j] & w) ? -active.theta[j] : active.theta[j];
            }
            const double y = std::cos(2.0 * v);
            sum += y;
            sumsq += y * y;
        }
        sums[b] = sum;
        sumsqs[b] = sumsq;
    });
    const double total = std::accumulate(sums.begin(), sums.end(), 0.0);
    const double totalsq = std::accumulate(sumsqs.begin(), sumsqs.end(), 0.0);
    const double nd = static_cast<double>(n_samples);
    const double mean = total / nd;
    double var = n_samples > 1 ? (totalsq - nd * mean * mean) / (nd - 1.0) : 0.0;
    var = std::max(var, 0.0);
    return {mean, std::sqrt(var / nd), n_samples};
}

/// Value and gradient of <Z_S> from one shared batch of w draws:
///   d<Z_S>/dtheta_k = -2 E_w[(-1)^{<g_k, w>} sin(2 sum_{A(S)} theta_j (-1)^{<g_j, w>})] for k in A(S),
/// exactly zero otherwise.
inline std::pair<Estimate, GradientEstimate> expval_and_grad_mc(const IQPCircuit &c, Observable s, std::size_t n_samples,
                                                                Rng &rng) {
    detail::require_observable(c, s);
    if (n_samples == 0) throw ArgumentError("Monte-Carlo estimation needs at least one sample");
    std::pair<Estimate, GradientEstimate> out{
        Estimate{1.0, 0.0, n_samples},
        GradientEstimate{std::vector<double>(c.size(), 0.0), std::vector<double>(c.size(), 0.0), n_samples}};
    const auto active = detail::active_gates(c, s);
    if (active.index.empty()) return out;
    const std::size_t m = active.index.size();
    const Bits wmask = low_mask(c.n_qubits());
    const std::uint64_t seed = rng();
    const std::size_t blocks = (n_samples + detail::kMcBlock - 1) / detail::kMcBlock;
    // Per block: [value sum, value sumsq, grad sums (m), grad sumsqs (m)].
    std::vector<std::vector<double>> acc(blocks);
    parallel_blocks(blocks, [&](std::size_t b) {
        Rng local = make_stream(seed, {b});
        const std::size_t count = std::min(detail::kMcBlock, n_samples - b * detail::kMcBlock);
        std::vector<double> a(2 + 2 * m, 0.0), sign(m);
        for (std::size_t t = 0; t < count; ++t) {
            const Bits w = local() & wmask;
            double v = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                sign[j] = parity(active.mask[j] & w) ? -1.0 : 1.0;
                v += sign[j] * active.theta[j];
            }
            const double y = std::cos(2.0 * v);
            a[0] += y;
            a[1] += y * y;
            const double sv = -2.0 * std::sin(2.0 * v);
            for (std::size_t j = 0; j < m; ++j) {
                const double gy = sign[j] * sv;
                a[2 + j] += gy;
                a[2 + m + j] += gy * gy;
            }
        }
        acc[b] = std::move(a);
    });
    const double nd = static_cast<double>(n_samples);
    auto summarize = [&](std::size_t sum_idx, std::size_t sq_idx) {
        double total = 0.0, totalsq = 0.0;
        for (std::size_t b = 0; b < blocks; ++b) {
            total += acc[b][sum_idx];
            totalsq += acc[b][sq_idx];
        }
        const double mean = total / nd;
        const double var = n_samples > 1 ? std::max(0.0, (totalsq - nd * mean * mean) / (nd - 1.0)) : 0.0;
        return std::pair{mean, std::sqrt(var / nd)};
    };
    std::tie(out.first.value, out.first.std_error) = summarize(0, 1);
    for (std::size_t j = 0; j < m; ++j) {
        std::tie(out.second.value[active.index[j]], out.second.std_error[active.index[j]]) = summarize(2 + j, 2 + m + j);
    }
    return out;
}

/// Unbiased gradient estimate of <Z_S>; see expval_and_grad_mc.
inline GradientEstimate grad_expval_mc(const IQPCircuit &c, Observable s, std::size_t n_samples, Rng &rng) {
    return expval_and_grad_mc(c, s, n_samples, rng).second;
}

/// i.i.d. draws from the Born distribution by inverse CDF.
inline std::vector<Bits> sample(const BornDistribution &d, std::size_t shots, Rng &rng) {
    std::vector<double> cdf(d.size());
    std::partial_sum(d.probabilities.begin(), d.probabilities.end(), cdf.begin());
    const double total = cdf.back();
    std::vector<Bits> out(shots);
    for (auto &x : out) {
        const double u = uniform01(rng) * total;
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        if (it == cdf.end()) it = std::prev(cdf.end());
        x = static_cast<Bits>(it - cdf.begin());
    }
    return out;
}

inline std::vector<Bits> sample(const IQPCircuit &c, std::size_t shots, Rng &rng) {
    detail::require_exact_capacity(c.n_qubits(), kExactQubitCap, "sample");
    return sample(full_distribution(c), shots, rng);
}

/// Exact dp(x)/dtheta_k = 2 Re[conj(<x|U|0>) <x|dU/dtheta_k|0>], from two Walsh passes.
inline double parameter_influence(const IQPCircuit &c, Bits x, std::size_t k) {
    detail::require_exact_capacity(c.n_qubits(), kInfluenceQubitCap, "parameter_influence");
    if (k >= c.size()) throw ArgumentError("gate index out of range");
    if (x & ~low_mask(c.n_qubits())) throw ArgumentError("bitstring exceeds the circuit's qubit count");
    const auto phi = phase_table(c);
    const Bits gk = c.generator(k).mask();
    std::vector<std::complex<double>> amp(phi.size()), damp(phi.size());
    for (std::size_t w = 0; w < phi.size(); ++w) {
        amp[w] = std::polar(1.0, phi[w]);
        const double s = parity(gk & static_cast<Bits>(w)) ? -1.0 : 1.0;
        damp[w] = std::complex<double>(0.0, s) * amp[w];
    }
    fwht(std::span<std::complex<double>>(amp));
    fwht(std::span<std::complex<double>>(damp));
    const double scale = 1.0 / static_cast<double>(phi.size());
    const auto a = amp[static_cast<std::size_t>(x)] * scale;
    const auto da = damp[static_cast<std::size_t>(x)] * scale;
    return 2.0 * std::real(std::conj(a) * da);
}

/// Dense exact state of a circuit, kept for reverse-mode gradients.
struct ExactState {
    std::vector<double> phase;                    // phi(w)
    std::vector<std::complex<double>> amplitude;  // <x|U|0>
    BornDistribution distribution;
};

inline ExactState exact_state(const IQPCircuit &c) {
    detail::require_exact_capacity(c.n_qubits(), kExactQubitCap, "exact_state");
    ExactState st;
    st.phase = phase_table(c);
    st.amplitude.resize(st.phase.size());
    for (std::size_t w = 0; w < st.phase.size(); ++w) st.amplitude[w] = std::polar(1.0, st.phase[w]);
    fwht(std::span<std::complex<double>>(st.amplitude));
    const double scale = 1.0 / static_cast<double>(st.phase.size());
    st.distribution = {c.n_qubits(), std::vector<double>(st.phase.size())};
    for (std::size_t x = 0; x < st.amplitude.size(); ++x) {
        st.amplitude[x] *= scale;
        st.distribution.probabilities[x] = std::norm(st.amplitude[x]);
    }
    return st;
}

/// Reverse-mode gradient of a loss L(p) given dL/dp(x), for every generator mask g at once:
///   dL/dtheta_g = sum_w (-1)^{<g, w>} r(w),  r(w) = -2 Im[exp(i phi(w)) c(w)],
///   c = 2^{-n} WHT[dL/dp * conj(amp)].
/// Entry g of the result is the derivative for a gate on mask g, present in the circuit or not.
inline std::vector<double> exact_gradient_all_masks(const ExactState &st, std::span<const double> dl_dp) {
    const std::size_t size = st.amplitude.size();
    if (dl_dp.size() != size) throw ArgumentError("dL/dp length does not match the state");
    std::vector<std::complex<double>> cw(size);
    for (std::size_t x = 0; x < size; ++x) cw[x] = dl_dp[x] * std::conj(st.amplitude[x]);
    fwht(std::span<std::complex<double>>(cw));
    const double scale = 1.0 / static_cast<double>(size);
    std::vector<double> r(size);
    for (std::size_t w = 0; w < size; ++w) r[w] = -2.0 * std::imag(std::polar(1.0, st.phase[w]) * cw[w]) * scale;
    fwht(std::span<double>(r));
    return r;
}

/// dL/dtheta_j for the circuit's own gates.
inline std::vector<double> exact_gradient(const IQPCircuit &c, const ExactState &st, std::span<const double> dl_dp) {
    const auto all = exact_gradient_all_masks(st, dl_dp);
    std::vector<double> g(c.size());
    for (std::size_t j = 0; j < c.size(); ++j) g[j] = all[static_cast<std::size_t>(c.generator(j).mask())];
    return g;
}

}  // namespace conquer
