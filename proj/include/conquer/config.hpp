#pragma once

#include <charconv>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "conquer/circuit.hpp"
#include "conquer/controller.hpp"
#include "conquer/datasets.hpp"
#include "conquer/errors.hpp"
#include "conquer/mmd.hpp"
#include "conquer/trainer.hpp"

namespace conquer {

/// Everything a CLI run can be configured with. Files are flat "key = value" lines under
/// "[section]" headers; '#' starts a comment.
struct RunConfig {
    IsingConfig ising;
    double blob_noise = 0.05;
    std::size_t data_samples = 10000;

    unsigned base_order = 6;
    double init_scale = 0.2;

    TrainConfig train;
    std::size_t bias_iters = 300;  // fixed-length retraining for train-bias

    std::size_t shots = 10000;
};

namespace detail {

template <class T>
T parse_number(std::string_view key, std::string_view v) {
    T out{};
    if constexpr (std::is_floating_point_v<T>) {
        try {
            return static_cast<T>(parse_double(v));
        } catch (const FormatError &) {
        }
    } else {
        const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
        if (res.ec == std::errc() && res.ptr == v.data() + v.size()) return out;
    }
    throw FormatError("config key '" + std::string(key) + "': cannot parse '" + std::string(v) + "'");
}

inline bool parse_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw FormatError("config key '" + std::string(key) + "': expected true/false, got '" + std::string(v) + "'");
}

inline std::string to_string(MmdEstimator e) {
    switch (e) {
        case MmdEstimator::subsets_mc: return "subsets_mc";
        case MmdEstimator::subsets_exact: return "subsets_exact";
        case MmdEstimator::exact: return "exact";
    }
    return "?";
}

inline MmdEstimator parse_estimator(std::string_view v) {
    if (v == "subsets_mc") return MmdEstimator::subsets_mc;
    if (v == "subsets_exact") return MmdEstimator::subsets_exact;
    if (v == "exact") return MmdEstimator::exact;
    throw FormatError("config key 'train.estimator': expected subsets_mc|subsets_exact|exact, got '" + std::string(v) +
                      "'");
}

struct ConfigField {
    const char *section;
    const char *key;
    std::function<std::string(const RunConfig &)> get;
    std::function<void(RunConfig &, std::string_view)> set;
};

#define CONQUER_NUM(sec, name, member)                                                               \
    ConfigField {                                                                                    \
        sec, name, [](const RunConfig &c) { return num(c.member); },                                 \
            [](RunConfig &c, std::string_view v) {                                                   \
                c.member = parse_number<std::remove_cvref_t<decltype(c.member)>>(sec "." name, v); \
            }                                                                                        \
    }

template <class T>
std::string num(T v) {
    if constexpr (std::is_floating_point_v<T>) {
        return format_double(static_cast<double>(v));
    } else {
        return std::to_string(v);
    }
}

inline const std::vector<ConfigField> &config_fields() {
    static const std::vector<ConfigField> fields = {
        CONQUER_NUM("data", "ising_side", ising.L),
        CONQUER_NUM("data", "ising_temperature", ising.temperature),
        CONQUER_NUM("data", "ising_burn_in_sweeps", ising.burn_in_sweeps),
        CONQUER_NUM("data", "ising_thinning_sweeps", ising.thinning_sweeps),
        CONQUER_NUM("data", "ising_chains", ising.chains),
        CONQUER_NUM("data", "blob_noise", blob_noise),
        CONQUER_NUM("data", "samples", data_samples),
        CONQUER_NUM("base", "order", base_order),
        CONQUER_NUM("base", "init_scale", init_scale),
        CONQUER_NUM("train", "learning_rate", train.learning_rate),
        CONQUER_NUM("train", "max_iters", train.max_iters),
        CONQUER_NUM("train", "adam_beta1", train.adam.beta1),
        CONQUER_NUM("train", "adam_beta2", train.adam.beta2),
        CONQUER_NUM("train", "adam_epsilon", train.adam.epsilon),
        CONQUER_NUM("train", "convergence_tolerance", train.convergence.tolerance),
        CONQUER_NUM("train", "convergence_patience", train.convergence.patience),
        CONQUER_NUM("train", "convergence_smoothing", train.convergence.smoothing),
        ConfigField{"train", "stop_on_convergence",
                    [](const RunConfig &c) { return std::string(c.train.stop_on_convergence ? "true" : "false"); },
                    [](RunConfig &c, std::string_view v) {
                        c.train.stop_on_convergence = parse_bool("train.stop_on_convergence", v);
                    }},
        ConfigField{"train", "estimator", [](const RunConfig &c) { return to_string(c.train.estimator); },
                    [](RunConfig &c, std::string_view v) { c.train.estimator = parse_estimator(v); }},
        CONQUER_NUM("train", "mc_samples", train.mc_samples),
        CONQUER_NUM("train", "subsets", train.subsets),
        CONQUER_NUM("train", "kernel_sigma", train.kernel_sigma),
        CONQUER_NUM("train", "checkpoint_every", train.checkpoint_every),
        CONQUER_NUM("bias", "lambda", train.lambda),
        ConfigField{"bias", "variance_gradient",
                    [](const RunConfig &c) {
                        return std::string(c.train.variance_gradient == VarianceGradient::spsa ? "spsa" : "exact");
                    },
                    [](RunConfig &c, std::string_view v) {
                        if (v == "spsa") {
                            c.train.variance_gradient = VarianceGradient::spsa;
                        } else if (v == "exact") {
                            c.train.variance_gradient = VarianceGradient::exact;
                        } else {
                            throw FormatError("config key 'bias.variance_gradient': expected spsa|exact, got '" +
                                              std::string(v) + "'");
                        }
                    }},
        CONQUER_NUM("bias", "spsa_delta", train.spsa_delta),
        CONQUER_NUM("bias", "spsa_repeats", train.spsa_repeats),
        CONQUER_NUM("bias", "iters", bias_iters),
        CONQUER_NUM("bias", "weak_threshold", train.bias_selection.threshold),
        CONQUER_NUM("bias", "window", train.bias_selection.window),
        CONQUER_NUM("controller", "high_weight_mean", train.smart_init.high_weight_mean),
        CONQUER_NUM("controller", "low_weight_mean", train.smart_init.low_weight_mean),
        CONQUER_NUM("controller", "weight_sd", train.smart_init.weight_sd),
        CONQUER_NUM("controller", "noise_sd", train.smart_init.noise_sd),
        CONQUER_NUM("sample", "shots", shots),
    };
    return fields;
}

#undef CONQUER_NUM

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace detail

/// Sets one "section.key" entry. Unknown keys are an error.
inline void set_config_value(RunConfig &cfg, std::string_view section, std::string_view key, std::string_view value) {
    for (const auto &f : detail::config_fields()) {
        if (section == f.section && key == f.key) {
            f.set(cfg, value);
            return;
        }
    }
    throw FormatError("unknown config key '" + std::string(section) + "." + std::string(key) + "'");
}

/// Applies a config file on top of `cfg`.
inline void read_config(std::istream &in, RunConfig &cfg) {
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']' || t.size() < 3)
                throw FormatError("config line " + std::to_string(lineno) + ": malformed section header '" + t + "'");
            section = detail::trim(std::string_view(t).substr(1, t.size() - 2));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw FormatError("config line " + std::to_string(lineno) + ": expected 'key = value', got '" + t + "'");
        if (section.empty())
            throw FormatError("config line " + std::to_string(lineno) + ": key outside of any [section]");
        set_config_value(cfg, section, detail::trim(std::string_view(t).substr(0, eq)),
                         detail::trim(std::string_view(t).substr(eq + 1)));
    }
}

/// Every key with its current value, grouped by section; read_config of this text reproduces `cfg`.
inline void write_config(std::ostream &out, const RunConfig &cfg) {
    std::string section;
    for (const auto &f : detail::config_fields()) {
        if (section != f.section) {
            if (!section.empty()) out << '\n';
            section = f.section;
            out << '[' << section << "]\n";
        }
        out << f.key << " = " << f.get(cfg) << '\n';
    }
}

inline std::string config_text(const RunConfig &cfg) {
    std::ostringstream os;
    write_config(os, cfg);
    return os.str();
}

}  // namespace conquer
