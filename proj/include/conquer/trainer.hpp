#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "conquer/circuit.hpp"
#include "conquer/controller.hpp"
#include "conquer/datasets.hpp"
#include "conquer/errors.hpp"
#include "conquer/evaluator.hpp"
#include "conquer/mmd.hpp"
#include "conquer/rng.hpp"

namespace conquer {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Converged at iteration t when the exponentially smoothed loss improved by less than
/// `tolerance` over the last `patience` iterations.
struct ConvergenceCriterion {
    double tolerance = 1e-4;
    std::size_t patience = 50;
    double smoothing = 0.1;  // EMA weight of the newest loss
};

struct TrainConfig {
    double learning_rate = 0.01;
    std::size_t max_iters = 1000;
    AdamConfig adam;
    ConvergenceCriterion convergence;
    bool stop_on_convergence = true;

    MmdEstimator estimator = MmdEstimator::exact;
    std::size_t mc_samples = 2000;
    std::size_t subsets = 64;
    double kernel_sigma = 0.0;  // <= 0 selects sigma^2 = n / 8

    double lambda = 0.5;
    VarianceGradient variance_gradient = VarianceGradient::exact;
    double spsa_delta = 0.01;
    std::size_t spsa_repeats = 1;

    SmartInitConfig smart_init;
    BiasSelection bias_selection;
    std::uint64_t seed = 0;

    std::size_t checkpoint_every = 0;  // 0 disables
    std::function<void(std::size_t iter, const IQPCircuit &)> on_checkpoint;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ArgumentError("learning_rate must be positive");
        if (max_iters == 0) throw ArgumentError("max_iters must be positive");
        if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0))
            throw ArgumentError("Adam betas must be in [0, 1)");
        if (!(adam.epsilon > 0.0)) throw ArgumentError("Adam epsilon must be positive");
        if (!(convergence.tolerance >= 0.0)) throw ArgumentError("convergence tolerance must be nonnegative");
        if (convergence.patience == 0) throw ArgumentError("convergence patience must be positive");
        if (!(convergence.smoothing > 0.0 && convergence.smoothing <= 1.0))
            throw ArgumentError("convergence smoothing must be in (0, 1]");
        if (mc_samples == 0) throw ArgumentError("mc_samples must be positive");
        if (subsets == 0) throw ArgumentError("subsets must be positive");
        if (!(lambda >= 0.0)) throw ArgumentError("lambda must be nonnegative");
        if (!(spsa_delta > 0.0)) throw ArgumentError("spsa_delta must be positive");
        if (spsa_repeats == 0) throw ArgumentError("spsa_repeats must be positive");
    }

    KernelConfig kernel(unsigned n) const {
        return kernel_sigma > 0.0 ? KernelConfig(kernel_sigma) : KernelConfig::for_qubits(n);
    }

    BiasOptions bias_options() const {
        BiasOptions o;
        o.estimator = estimator;
        o.subsets = subsets;
        o.mc_samples = mc_samples;
        o.variance_gradient = variance_gradient;
        o.spsa_delta = spsa_delta;
        o.spsa_repeats = spsa_repeats;
        return o;
    }
};

struct IterationRecord {
    std::size_t iter = 0;
    double loss = 0.0;
    double grad_norm = 0.0;
    double seconds = 0.0;  // wall time since training started
};

struct TrainHistory {
    std::vector<IterationRecord> records;
    std::vector<double> final_parameters;
    std::optional<std::size_t> converged_at;  // iteration index at which the criterion first held
};

/// iter,loss,grad_norm (deterministic given the seed).
inline void write_history_csv(std::ostream &out, const TrainHistory &h) {
    out << "iter,loss,grad_norm\n";
    for (const auto &r : h.records) out << r.iter << ',' << format_double(r.loss) << ',' << format_double(r.grad_norm) << '\n';
}

/// iter,seconds (wall clock; differs between runs).
inline void write_timing_csv(std::ostream &out, const TrainHistory &h) {
    out << "iter,seconds\n";
    for (const auto &r : h.records) out << r.iter << ',' << r.seconds << '\n';
}

/// Raised when a loss or gradient turns NaN/Inf; carries the parameters at the failing step.
class TrainingDiverged : public NumericalError {
  public:
    TrainingDiverged(const std::string &what, std::size_t iteration, IQPCircuit state)
        : NumericalError(what), iteration_(iteration), state_(std::move(state)) {}
    std::size_t iteration() const { return iteration_; }
    const IQPCircuit &state() const { return state_; }

  private:
    std::size_t iteration_;
    IQPCircuit state_;
};

/// Loss and gradient of a circuit; may draw randomness from the supplied stream.
using Objective = std::function<LossReport(const IQPCircuit &, Rng &)>;

struct TrainResult {
    IQPCircuit circuit;
    TrainHistory history;
};

/// Smoothed-loss tracker implementing ConvergenceCriterion.
class ConvergenceMonitor {
  public:
    explicit ConvergenceMonitor(ConvergenceCriterion c) : c_(c) {}

    /// Feeds one loss; returns true once the criterion holds.
    bool update(double loss) {
        smooth_ = smoothed_.empty() ? loss : c_.smoothing * loss + (1.0 - c_.smoothing) * smooth_;
        smoothed_.push_back(smooth_);
        if (smoothed_.size() <= c_.patience) return false;
        return smoothed_[smoothed_.size() - 1 - c_.patience] - smooth_ < c_.tolerance;
    }
    const std::vector<double> &smoothed() const { return smoothed_; }

  private:
    ConvergenceCriterion c_;
    double smooth_ = 0.0;
    std::vector<double> smoothed_;
};

/// Adam on the masked parameters. Frozen entries are never written.
inline TrainResult train(const IQPCircuit &c, const Objective &objective, const std::vector<bool> &trainable,
                         const TrainConfig &cfg) {
    cfg.validate();
    if (trainable.size() != c.size()) {
        throw ArgumentError("trainable mask has " + std::to_string(trainable.size()) + " entries for " +
                            std::to_string(c.size()) + " gates");
    }
    std::vector<double> theta = c.theta();
    std::vector<double> m(theta.size(), 0.0), v(theta.size(), 0.0);
    TrainResult out{c, {}};
    ConvergenceMonitor monitor(cfg.convergence);
    const auto start = std::chrono::steady_clock::now();
    double b1t = 1.0, b2t = 1.0;
    IQPCircuit current = c;

    for (std::size_t it = 0; it < cfg.max_iters; ++it) {
        Rng rng = make_stream(cfg.seed, {0x7a1, it});
        const LossReport rep = objective(current, rng);
        if (rep.gradient.size() != theta.size()) throw ArgumentError("objective returned a gradient of the wrong length");
        double norm2 = 0.0;
        bool finite = std::isfinite(rep.value);
        std::size_t bad = 0;
        for (std::size_t j = 0; j < theta.size(); ++j) {
            if (!trainable[j]) continue;
            if (!std::isfinite(rep.gradient[j])) {
                finite = false;
                bad = j;
                break;
            }
            norm2 += rep.gradient[j] * rep.gradient[j];
        }
        if (!finite) {
            throw TrainingDiverged("non-finite loss or gradient at iteration " + std::to_string(it) +
                                       " (loss=" + format_double(rep.value) + ", first bad gradient index " +
                                       std::to_string(bad) + ")",
                                   it, current);
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        out.history.records.push_back({it, rep.value, std::sqrt(norm2), seconds});
        if (monitor.update(rep.value) && !out.history.converged_at) {
            out.history.converged_at = it;
            if (cfg.stop_on_convergence) break;
        }
        if (it + 1 == cfg.max_iters) break;  // last evaluation reports the returned parameters

        b1t *= cfg.adam.beta1;
        b2t *= cfg.adam.beta2;
        for (std::size_t j = 0; j < theta.size(); ++j) {
            if (!trainable[j]) continue;
            const double g = rep.gradient[j];
            m[j] = cfg.adam.beta1 * m[j] + (1.0 - cfg.adam.beta1) * g;
            v[j] = cfg.adam.beta2 * v[j] + (1.0 - cfg.adam.beta2) * g * g;
            const double mhat = m[j] / (1.0 - b1t), vhat = v[j] / (1.0 - b2t);
            theta[j] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam.epsilon);
        }
        current = current.with_theta(theta);
        if (cfg.checkpoint_every && cfg.on_checkpoint && (it + 1) % cfg.checkpoint_every == 0) {
            cfg.on_checkpoint(it + 1, current);
        }
    }
    out.circuit = current;
    out.history.final_parameters = current.theta();
    return out;
}

inline TrainResult train(const IQPCircuit &c, const Objective &objective, const TrainConfig &cfg) {
    return train(c, objective, std::vector<bool>(c.size(), true), cfg);
}

// ---------------------------------------------------------------------------
// Objectives
// ---------------------------------------------------------------------------

/// MMD^2 against `data` with the estimator chosen in cfg.
inline Objective mmd_objective(const BitstringDataset &data, const TrainConfig &cfg) {
    const auto kcfg = cfg.kernel(data.n);
    auto shared = std::make_shared<const BitstringDataset>(data);
    if (cfg.estimator == MmdEstimator::exact) {
        auto target = std::make_shared<const ExactMmdTarget>(data, kcfg);
        return [target, shared](const IQPCircuit &c, Rng &) {
            detail::require_data_matches(c, *shared);
            return mmd_exact(c, *target);
        };
    }
    const auto source = cfg.estimator == MmdEstimator::subsets_exact ? MomentSource::exact : MomentSource::monte_carlo;
    const std::size_t subsets = cfg.subsets, samples = cfg.mc_samples;
    return [=](const IQPCircuit &c, Rng &rng) { return mmd_loss(c, *shared, kcfg, subsets, samples, rng, source); };
}

inline Objective bias_objective(const BitstringDataset &data, const std::vector<Bits> &patterns, const TrainConfig &cfg) {
    detail::require_exact_capacity(data.n, kBiasQubitCap, "bias objective");
    const auto kcfg = cfg.kernel(data.n);
    auto shared = std::make_shared<const BitstringDataset>(data);
    auto modes = std::make_shared<const ModeMap>(data.n, patterns);
    std::shared_ptr<const ExactMmdTarget> target;
    if (cfg.estimator == MmdEstimator::exact) target = std::make_shared<const ExactMmdTarget>(data, kcfg);
    const auto opt = cfg.bias_options();
    const double lambda = cfg.lambda;
    return [=](const IQPCircuit &c, Rng &rng) {
        return bias_loss(c, *shared, *modes, lambda, kcfg, opt, rng, target.get());
    };
}

// ---------------------------------------------------------------------------
// Training drivers
// ---------------------------------------------------------------------------

inline BitstringDataset filter_dataset(const BitstringDataset &data, const std::function<bool(Bits)> &predicate) {
    std::vector<Bits> kept;
    for (auto x : data.samples)
        if (predicate(x)) kept.push_back(x);
    if (kept.empty()) throw ArgumentError("filter removed every sample; the conditional target is empty");
    auto meta = data.metadata;
    meta["filtered_from"] = std::to_string(data.size());
    return BitstringDataset(data.n, std::move(kept), std::move(meta));
}

inline BitstringDataset filter_dataset(const BitstringDataset &data, const ControlObjective &obj) {
    const auto range = obj.weight_range(data.n);
    return filter_dataset(data, [range](Bits x) { return range.contains(x); });
}

/// Base pretraining: every parameter trainable under MMD^2.
inline TrainResult train_base(const IQPCircuit &c, const BitstringDataset &data, const TrainConfig &cfg) {
    return train(c, mmd_objective(data, cfg), cfg);
}

struct ConditionalResult {
    ControllerBundle bundle;
    TrainHistory history;
    std::size_t target_size = 0;
};

/// Controller-only training: the loss sees combine_direct(base, controller); only phi moves.
inline ConditionalResult train_conditional(const IQPCircuit &base, const ControlObjective &obj,
                                           const BitstringDataset &data, const TrainConfig &cfg) {
    if (data.n != base.n_qubits()) throw ArgumentError("dataset width does not match the base circuit");
    const auto target = filter_dataset(data, obj);
    auto bundle = construct_controller(base.n_qubits(), obj, base, cfg.seed, cfg.smart_init, cfg.bias_selection);

    // combine_direct layout is fixed; precompute where each controller gate lands.
    const IQPCircuit zero_ctrl = bundle.circuit.with_theta(std::vector<double>(bundle.circuit.size(), 0.0));
    const auto frame = std::make_shared<const IQPCircuit>(combine_direct(base, zero_ctrl));
    auto where = std::make_shared<std::vector<std::size_t>>();
    for (auto g : bundle.circuit.generators()) where->push_back(frame->find(g));

    const Objective inner = mmd_objective(target, cfg);
    Objective outer = [=](const IQPCircuit &ctrl, Rng &rng) {
        std::vector<double> theta = frame->theta();
        for (std::size_t k = 0; k < where->size(); ++k) theta[(*where)[k]] += ctrl.theta(k);
        LossReport rep = inner(frame->with_theta(std::move(theta)), rng);
        std::vector<double> g(where->size());
        for (std::size_t k = 0; k < where->size(); ++k) g[k] = rep.gradient[(*where)[k]];
        rep.gradient = std::move(g);
        return rep;
    };
    auto result = train(bundle.circuit, outer, cfg);
    bundle.circuit = result.circuit;
    return {std::move(bundle), std::move(result.history), target.size()};
}

/// The circuit the conditional model actually samples from.
inline IQPCircuit combined_circuit(const IQPCircuit &base, const ControllerBundle &b) {
    return combine_direct(base, b.circuit);
}

struct BiasResult {
    IQPCircuit circuit;
    TrainHistory history;
    std::size_t added_gates = 0;
};

/// Implicit connection: bias-mitigation gates are embedded into the base topology (new gates start at
/// smart_initialize values) and the whole parameter vector is retrained under MMD^2 + lambda Var(modes).
inline BiasResult train_bias_mitigated(const IQPCircuit &base, const BitstringDataset &data,
                                       const std::vector<Bits> &patterns, const TrainConfig &cfg) {
    detail::require_exact_capacity(base.n_qubits(), kBiasQubitCap, "train_bias_mitigated");
    if (data.n != base.n_qubits()) throw ArgumentError("dataset width does not match the base circuit");
    const ControlObjective obj{ObjectiveKind::bias_mitigation, {}};
    const auto extra = get_control_gates(obj, base.n_qubits(), base, cfg.bias_selection);
    IQPCircuit start = embed_implicit(base, extra);
    const std::size_t added = start.size() - base.size();
    if (added > 0) {
        std::vector<Generator> fresh(start.generators().begin() + static_cast<std::ptrdiff_t>(base.size()),
                                     start.generators().end());
        Rng rng = make_stream(cfg.seed, {0xb1a5});
        const auto init = smart_initialize(fresh, obj, rng, cfg.smart_init);
        std::vector<double> theta = start.theta();
        std::copy(init.begin(), init.end(), theta.begin() + static_cast<std::ptrdiff_t>(base.size()));
        start = start.with_theta(std::move(theta));
    }
    auto result = train(start, bias_objective(data, patterns, cfg), cfg);
    return {std::move(result.circuit), std::move(result.history), added};
}

}  // namespace conquer
