// conquer: data generation, training, sampling, reports and QASM export for IQP generative models.

#include <openssl/crypto.h>
#include <openssl/evp.h>

#include <CLI11.hpp>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "conquer/analysis.hpp"
#include "conquer/config.hpp"
#include "conquer/crz.hpp"
#include "conquer/trainer.hpp"

#ifndef CONQUER_VERSION
#define CONQUER_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace conquer;

namespace {

enum Exit : int {
    kOk = 0,
    kInternal = 1,
    kUsage = 2,
    kFileError = 3,
    kCapacity = 4,
    kBadArgument = 5,
    kDiverged = 6,
    kInputChanged = 7,
};

class InputChanged : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string sha256_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path + " for hashing");
    EVP_MD_CTX *ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream hex;
    for (unsigned i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return hex.str();
}

std::vector<std::string> split_list(const std::string &s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) out.push_back(item);
    return out;
}

/// Collects what a run read and wrote, then writes manifest.txt beside the outputs.
class Run {
  public:
    Run(std::vector<std::string> args, const RunConfig &cfg, std::uint64_t seed, fs::path out)
        : args_(std::move(args)), cfg_(cfg), seed_(seed), out_(std::move(out)) {
        fs::create_directories(out_);
    }

    const RunConfig &config() const { return cfg_; }
    std::uint64_t seed() const { return seed_; }

    void input(const std::string &role, const std::string &path) {
        if (!fs::exists(path)) throw FormatError("input file not found: " + path);
        inputs_.emplace_back(role, path + " sha256:" + sha256_file(path));
    }

    fs::path path(const std::string &name) const { return out_ / name; }

    std::ofstream open(const std::string &name) {
        std::ofstream f(path(name), std::ios::binary);
        if (!f) throw FormatError("cannot write " + path(name).string());
        outputs_.push_back(name);
        return f;
    }

    void track(const std::string &name) { outputs_.push_back(name); }

    void write_manifest() const {
        std::ofstream m(out_ / "manifest.txt", std::ios::binary);
        if (!m) throw FormatError("cannot write manifest in " + out_.string());
        m << "# conquer run manifest; replay with: conquer replay --manifest <this file> --out <dir>\n";
        m << "[run]\n";
        m << "command = " << (args_.empty() ? "" : args_[0]) << '\n';
        for (std::size_t i = 0; i < args_.size(); ++i) m << "arg." << i << " = " << args_[i] << '\n';
        m << "seed = " << seed_ << '\n';
        m << "version = " << CONQUER_VERSION << '\n';
        m << "compiler = " << __VERSION__ << '\n';
        m << "openssl = " << OpenSSL_version(OPENSSL_VERSION) << '\n';
        m << "threads = " << thread_count() << '\n';
        m << "\n[inputs]\n";
        for (const auto &[role, v] : inputs_) m << role << " = " << v << '\n';
        m << "\n[outputs]\n";
        for (const auto &name : outputs_) {
            if (fs::exists(out_ / name)) m << name << " = sha256:" << sha256_file((out_ / name).string()) << '\n';
        }
        m << '\n';
        write_config(m, cfg_);
    }

  private:
    std::vector<std::string> args_;
    RunConfig cfg_;
    std::uint64_t seed_;
    fs::path out_;
    std::vector<std::pair<std::string, std::string>> inputs_;
    std::vector<std::string> outputs_;
};

IQPCircuit load_circuit(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open circuit file " + path);
    return read_circuit(in);
}

ControllerBundle load_controller(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open controller file " + path);
    return read_controller(in);
}

std::vector<Bits> load_patterns(const std::string &spec, unsigned n) {
    if (spec == "blob") {
        if (n != kBlobBits) throw ArgumentError("blob patterns need 16 qubits, got " + std::to_string(n));
        return blob_patterns();
    }
    std::ifstream in(spec);
    if (!in) throw FormatError("cannot open pattern file " + spec);
    std::vector<Bits> out;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (line.size() != n) throw FormatError("pattern '" + line + "' does not have " + std::to_string(n) + " bits");
        out.push_back(parse_bitstring(line));
    }
    if (out.empty()) throw FormatError("pattern file " + spec + " has no patterns");
    return out;
}

/// Writes base/controller circuits through a Run so they land in the manifest.
void save_circuit(Run &run, const std::string &name, const IQPCircuit &c, std::vector<std::string> comments = {}) {
    auto f = run.open(name);
    write_circuit(f, c, comments);
}

void save_history(Run &run, const TrainHistory &h) {
    {
        auto f = run.open("history.csv");
        write_history_csv(f, h);
    }
    // wall-clock, not listed in the manifest
    std::ofstream t(run.path("timing.csv"));
    write_timing_csv(t, h);
}

void attach_checkpoints(Run &run, TrainConfig &cfg) {
    if (cfg.checkpoint_every == 0) return;
    cfg.on_checkpoint = [&run](std::size_t it, const IQPCircuit &c) {
        std::ofstream f(run.path("checkpoint_" + std::to_string(it) + ".iqp"));
        write_circuit(f, c);
    };
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

void cmd_gen_data(Run &run, const std::string &kind, std::optional<std::size_t> samples) {
    const auto &cfg = run.config();
    const std::size_t count = samples.value_or(cfg.data_samples);
    Rng rng = make_stream(run.seed(), {0xda7a});
    BitstringDataset d;
    if (kind == "ising") {
        d = ising_gibbs_sample(cfg.ising, count, rng);
    } else if (kind == "blob") {
        d = blob_dataset(cfg.blob_noise, count, rng);
    } else {
        throw ArgumentError("unknown dataset kind '" + kind + "' (expected ising or blob)");
    }
    d.metadata["seed"] = std::to_string(run.seed());
    {
        auto f = run.open("data.bits");
        write_dataset(f, d);
    }
    auto m = run.open("data.bits.meta");
    write_metadata(m, d.metadata);
    std::cout << "wrote " << d.size() << " samples of " << d.n << " bits to " << run.path("data.bits").string() << '\n';
}

void cmd_train_base(Run &run, const std::string &data_path) {
    run.input("data", data_path);
    const auto data = load_dataset(data_path);
    auto cfg = run.config();
    cfg.train.seed = run.seed();
    attach_checkpoints(run, cfg.train);
    const unsigned order = std::min(cfg.base_order, data.n);
    const auto c0 = build_full_order_circuit(data.n, order, init::order_balanced_gaussian(data.n, cfg.init_scale, run.seed()));
    const auto r = train_base(c0, data, cfg.train);
    save_circuit(run, "base.iqp", r.circuit, {"base order=" + std::to_string(order) + " seed=" + std::to_string(run.seed())});
    save_history(run, r.history);
    std::cout << "trained " << r.circuit.size() << " parameters for " << r.history.records.size()
              << " iterations, final loss " << format_double(r.history.records.back().loss)
              << (r.history.converged_at ? " (converged)" : "") << '\n';
}

void cmd_train_controller(Run &run, const std::string &base_path, const std::string &data_path,
                          const std::string &objective, std::optional<int> hw_lo, std::optional<int> hw_hi) {
    run.input("base", base_path);
    run.input("data", data_path);
    const auto base = load_circuit(base_path);
    const auto data = load_dataset(data_path);
    ControlObjective obj{parse_objective_kind(objective), {}};
    if (obj.kind == ObjectiveKind::bias_mitigation)
        throw ArgumentError("train-controller takes a weight objective; use train-bias for bias mitigation");
    if (hw_lo.has_value() != hw_hi.has_value()) throw ArgumentError("--hw-lo and --hw-hi must be given together");
    if (hw_lo) {
        if (*hw_lo < 0 || *hw_hi > static_cast<int>(base.n_qubits()) || *hw_lo > *hw_hi)
            throw ArgumentError("weight range must satisfy 0 <= hw-lo <= hw-hi <= n");
        obj.range = WeightRange{*hw_lo, *hw_hi};
    }
    auto cfg = run.config();
    cfg.train.seed = run.seed();
    attach_checkpoints(run, cfg.train);
    const auto r = train_conditional(base, obj, data, cfg.train);
    {
        auto f = run.open("controller.iqp");
        write_controller(f, r.bundle);
    }
    const auto combined = combined_circuit(base, r.bundle);
    save_circuit(run, "combined.iqp", combined);
    save_history(run, r.history);
    const auto range = obj.weight_range(base.n_qubits());
    std::cout << "controller " << to_string(obj.kind) << ": " << r.bundle.circuit.size() << " parameters, "
              << r.history.records.size() << " iterations on " << r.target_size << " filtered samples";
    if (base.n_qubits() <= kExactQubitCap) {
        const auto p = hw_probabilities(full_distribution(combined));
        double mass = 0.0;
        for (int w = range.lo; w <= range.hi; ++w) mass += p[static_cast<std::size_t>(w)];
        std::cout << ", exact mass in HW [" << range.lo << ',' << range.hi << "] = " << format_double(mass);
    }
    std::cout << '\n';
}

void cmd_train_bias(Run &run, const std::string &base_path, const std::string &data_path, const std::string &patterns_spec) {
    run.input("base", base_path);
    run.input("data", data_path);
    if (patterns_spec != "blob") run.input("patterns", patterns_spec);
    const auto base = load_circuit(base_path);
    const auto data = load_dataset(data_path);
    const auto patterns = load_patterns(patterns_spec, base.n_qubits());
    auto cfg = run.config();
    cfg.train.seed = run.seed();
    cfg.train.max_iters = cfg.bias_iters;
    cfg.train.stop_on_convergence = false;
    attach_checkpoints(run, cfg.train);
    detail::require_exact_capacity(base.n_qubits(), kBiasQubitCap, "train-bias");
    const ModeMap modes(base.n_qubits(), patterns);
    const auto before = bias_report(full_distribution(base), modes);
    const auto r = train_bias_mitigated(base, data, patterns, cfg.train);
    const auto after = bias_report(full_distribution(r.circuit), modes);
    save_circuit(run, "mitigated.iqp", r.circuit, {"bias-mitigated added_gates=" + std::to_string(r.added_gates)});
    save_history(run, r.history);
    {
        auto f = run.open("bias_before.csv");
        write_bias_csv(f, before, patterns, base.n_qubits());
    }
    {
        auto f = run.open("bias_after.csv");
        write_bias_csv(f, after, patterns, base.n_qubits());
    }
    {
        auto f = run.open("bias_summary.csv");
        f << "# total_deviation = sum_i |f_i - 1/K| over the K patterns\n";
        f << "metric,before,after,relative_reduction\n";
        auto row = [&](const char *name, double b, double a) {
            f << name << ',' << format_double(b) << ',' << format_double(a) << ',' << format_double(relative_reduction(b, a))
              << '\n';
        };
        row("stddev", before.stddev, after.stddev);
        row("max_min_ratio", before.max_min_ratio, after.max_min_ratio);
        row("total_deviation", before.total_deviation, after.total_deviation);
    }
    std::cout << "bias mitigation: added " << r.added_gates << " gates, std " << format_double(before.stddev) << " -> "
              << format_double(after.stddev) << ", max/min " << format_double(before.max_min_ratio) << " -> "
              << format_double(after.max_min_ratio) << '\n';
}

IQPCircuit circuit_with_controller(Run &run, const std::string &circuit_path, const std::string &controller_path) {
    run.input("circuit", circuit_path);
    auto c = load_circuit(circuit_path);
    if (!controller_path.empty()) {
        run.input("controller", controller_path);
        c = combined_circuit(c, load_controller(controller_path));
    }
    return c;
}

void cmd_sample(Run &run, const std::string &circuit_path, const std::string &controller_path,
                std::optional<std::size_t> shots) {
    const auto c = circuit_with_controller(run, circuit_path, controller_path);
    Rng rng = make_stream(run.seed(), {0x5a3});
    const auto s = sample(c, shots.value_or(run.config().shots), rng);
    {
        auto f = run.open("samples.bits");
        write_dataset(f, BitstringDataset(c.n_qubits(), s));
    }
    auto f = run.open("hw.csv");
    write_hw_csv(f, hw_histogram(s, c.n_qubits()));
    std::cout << "wrote " << s.size() << " samples\n";
}

void cmd_report_hw(Run &run, const std::string &samples_path, std::optional<int> lo, std::optional<int> hi) {
    run.input("samples", samples_path);
    const auto d = load_dataset(samples_path);
    const auto h = hw_histogram(d.samples, d.n);
    auto f = run.open("hw.csv");
    write_hw_csv(f, h);
    std::cout << "mean HW " << format_double(h.mean()) << ", std " << format_double(h.stddev());
    if (lo || hi) {
        const int a = lo.value_or(0), b = hi.value_or(static_cast<int>(d.n));
        std::cout << ", mass in [" << a << ',' << b << "] = " << format_double(mass_in_range(h, a, b));
    }
    std::cout << '\n';
}

void cmd_report_bias(Run &run, const std::string &circuit_path, const std::string &controller_path,
                     const std::string &samples_path, const std::string &patterns_spec) {
    if (circuit_path.empty() == samples_path.empty())
        throw ArgumentError("report bias needs exactly one of --circuit or --samples");
    if (patterns_spec != "blob") run.input("patterns", patterns_spec);
    BiasReport r;
    std::vector<Bits> patterns;
    std::vector<double> importance;
    unsigned n = 0;
    if (!circuit_path.empty()) {
        const auto c = circuit_with_controller(run, circuit_path, controller_path);
        n = c.n_qubits();
        patterns = load_patterns(patterns_spec, n);
        r = bias_report(full_distribution(c), ModeMap(n, patterns));
        for (const auto &row : pattern_importance(c, patterns)) importance.push_back(std::accumulate(row.begin(), row.end(), 0.0));
    } else {
        run.input("samples", samples_path);
        const auto d = load_dataset(samples_path);
        n = d.n;
        patterns = load_patterns(patterns_spec, n);
        r = bias_report(d.samples, ModeMap(n, patterns));
    }
    {
        auto f = run.open("bias.csv");
        write_bias_csv(f, r, patterns, n, importance);
    }
    auto f = run.open("bias_summary.csv");
    write_bias_summary_csv(f, r);
    std::cout << "pattern std " << format_double(r.stddev) << ", max/min " << format_double(r.max_min_ratio)
              << ", total deviation " << format_double(r.total_deviation) << '\n';
}

std::vector<unsigned> parse_uint_list(const std::string &s, const char *flag) {
    std::vector<unsigned> out;
    for (const auto &item : split_list(s)) {
        unsigned v = 0;
        const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
        if (res.ec != std::errc() || res.ptr != item.data() + item.size())
            throw ArgumentError(std::string(flag) + ": '" + item + "' is not a nonnegative integer");
        out.push_back(v);
    }
    if (out.empty()) throw ArgumentError(std::string(flag) + " needs at least one value");
    return out;
}

void cmd_report_overhead(Run &run, const std::string &ns, const std::string &modes) {
    const auto r = overhead_report(parse_uint_list(ns, "--n"), parse_uint_list(modes, "--modes"));
    auto f = run.open("overhead.csv");
    write_overhead_csv(f, r);
    write_overhead_csv(std::cout, r);
}

void cmd_report_heatmap(Run &run, const std::string &circuit_path) {
    run.input("circuit", circuit_path);
    const auto m = extract_weights(load_circuit(circuit_path));
    {
        auto f = run.open("heatmap.csv");
        write_heatmap_csv(f, m);
    }
    auto f = run.open("heatmap.svg");
    write_heatmap_svg(f, m);
}

void cmd_export_qasm(Run &run, const std::string &circuit_path, const std::string &controller_path) {
    const auto c = circuit_with_controller(run, circuit_path, controller_path);
    auto f = run.open("circuit.qasm");
    write_qasm(f, to_crz_program(c));
}

// ---------------------------------------------------------------------------
// Manifest replay
// ---------------------------------------------------------------------------

struct Manifest {
    std::vector<std::string> args;
    std::map<std::string, std::string> inputs;
    RunConfig config;
};

Manifest read_manifest(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open manifest " + path);
    Manifest m;
    std::map<std::size_t, std::string> args;
    std::string section;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[') {
            section = line.substr(1, line.size() - 2);
            continue;
        }
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) throw FormatError("malformed manifest line '" + line + "'");
        const std::string key = line.substr(0, eq), value = line.substr(eq + 3);
        if (section == "run") {
            if (key.rfind("arg.", 0) == 0) args[std::stoul(key.substr(4))] = value;
        } else if (section == "inputs") {
            m.inputs[key] = value;
        } else if (section != "outputs") {
            set_config_value(m.config, section, key, value);
        }
    }
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (!args.count(i)) throw FormatError("manifest is missing arg." + std::to_string(i));
        m.args.push_back(args[i]);
    }
    if (m.args.empty()) throw FormatError("manifest records no command");
    return m;
}

int run(std::vector<std::string> args, const std::optional<RunConfig> &preset);

int cmd_replay(const std::string &manifest_path, const std::string &out) {
    const auto m = read_manifest(manifest_path);
    for (const auto &[role, v] : m.inputs) {
        const auto sp = v.rfind(" sha256:");
        if (sp == std::string::npos) throw FormatError("malformed input record for " + role);
        const std::string file = v.substr(0, sp), hash = v.substr(sp + 8);
        if (!fs::exists(file)) throw FormatError("replay input missing: " + file);
        if (sha256_file(file) != hash) throw InputChanged("replay input " + file + " changed since the recorded run");
    }
    std::vector<std::string> args;
    for (std::size_t i = 0; i < m.args.size(); ++i) {
        const auto &a = m.args[i];
        if (a == "--config" || a == "--set" || a == "--out") {
            ++i;
            continue;
        }
        if (a.rfind("--config=", 0) == 0 || a.rfind("--set=", 0) == 0 || a.rfind("--out=", 0) == 0) continue;
        args.push_back(a);
    }
    args.push_back("--out");
    args.push_back(out);
    return run(args, m.config);
}

// ---------------------------------------------------------------------------
// Argument parsing
// ---------------------------------------------------------------------------

int run(std::vector<std::string> args, const std::optional<RunConfig> &preset) {
    CLI::App app{"Controllable IQP generative models: train, steer, de-bias and export", "conquer"};
    app.set_version_flag("--version", CONQUER_VERSION);
    app.require_subcommand(0, 1);
    app.fallthrough();

    std::string config_path;
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
    std::string out;
    bool dump = false;
    app.add_option("--config", config_path, "Config file (key = value lines under [section] headers)");
    app.add_option("--set", sets, "Override one config key: section.key=value (repeatable)");
    app.add_option("--seed", seed, "Seed for every stochastic step");
    app.add_option("--out", out, "Output directory (created if missing)");
    app.add_flag("--dump-config", dump, "Print the effective configuration and exit");

    std::string kind, data_path, base_path, objective, patterns = "blob", circuit_path, controller_path, samples_path;
    std::string n_list = "16,25,36,49,64,100,400,900", modes_list = "1,3,5,7", manifest_path;
    std::optional<std::size_t> count;
    std::optional<int> hw_lo, hw_hi;

    auto *gen = app.add_subcommand("gen-data", "Generate a dataset (ising | blob)");
    gen->add_option("kind", kind, "ising or blob")->required()->check(CLI::IsMember({"ising", "blob"}));
    gen->add_option("--samples", count, "Number of samples (default from config)");

    auto *tb = app.add_subcommand("train-base", "Pretrain a full-order IQP circuit under MMD");
    tb->add_option("--data", data_path, "Dataset file")->required();

    auto *tc = app.add_subcommand("train-controller", "Train a controller on a frozen base");
    tc->add_option("--base", base_path, "Base circuit file")->required();
    tc->add_option("--data", data_path, "Dataset file")->required();
    tc->add_option("--objective", objective, "low_weight | high_weight | balanced")->required();
    tc->add_option("--hw-lo", hw_lo, "Custom weight range lower bound");
    tc->add_option("--hw-hi", hw_hi, "Custom weight range upper bound");

    auto *tbias = app.add_subcommand("train-bias", "Embed bias-mitigation gates and retrain");
    tbias->add_option("--base", base_path, "Base circuit file")->required();
    tbias->add_option("--data", data_path, "Dataset file")->required();
    tbias->add_option("--patterns", patterns, "'blob' or a file of bitstrings");

    auto *smp = app.add_subcommand("sample", "Draw bitstrings from a circuit");
    smp->add_option("--circuit", circuit_path, "Circuit file")->required();
    smp->add_option("--controller", controller_path, "Controller added to the circuit");
    smp->add_option("--shots", count, "Number of samples (default from config)");

    auto *rep = app.add_subcommand("report", "Write a report (hw | bias | overhead | heatmap)");
    rep->require_subcommand(1);
    auto *rhw = rep->add_subcommand("hw", "Hamming-weight histogram of a sample file");
    rhw->add_option("--samples", samples_path, "Sample file")->required();
    rhw->add_option("--lo", hw_lo, "Range lower bound for the printed mass");
    rhw->add_option("--hi", hw_hi, "Range upper bound for the printed mass");
    auto *rbias = rep->add_subcommand("bias", "Pattern frequencies and bias statistics");
    rbias->add_option("--circuit", circuit_path, "Circuit file (exact distribution)");
    rbias->add_option("--controller", controller_path, "Controller added to the circuit");
    rbias->add_option("--samples", samples_path, "Sample file");
    rbias->add_option("--patterns", patterns, "'blob' or a file of bitstrings");
    auto *rover = rep->add_subcommand("overhead", "Controller parameter overhead table");
    rover->add_option("--n", n_list, "Comma-separated qubit counts");
    rover->add_option("--modes", modes_list, "Comma-separated control-mode counts");
    auto *rheat = rep->add_subcommand("heatmap", "Pairwise parameter-magnitude heatmap (CSV + SVG)");
    rheat->add_option("--circuit", circuit_path, "Circuit file")->required();

    auto *qasm = app.add_subcommand("export-qasm", "Export a circuit as OpenQASM 3 (h, cx, rz)");
    qasm->add_option("--circuit", circuit_path, "Circuit file")->required();
    qasm->add_option("--controller", controller_path, "Controller added to the circuit");

    auto *replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
    replay->add_option("--manifest", manifest_path, "manifest.txt of an earlier run")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        std::cerr << "usage error: " << e.what() << "\n(run 'conquer --help' for usage)\n";
        return kUsage;
    }

    RunConfig cfg = preset.value_or(RunConfig{});
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw FormatError("cannot open config file " + config_path);
        read_config(in, cfg);
    }
    for (const auto &s : sets) {
        const auto eq = s.find('='), dot = s.find('.');
        if (eq == std::string::npos || dot == std::string::npos || dot > eq)
            throw ArgumentError("--set expects section.key=value, got '" + s + "'");
        set_config_value(cfg, s.substr(0, dot), s.substr(dot + 1, eq - dot - 1), s.substr(eq + 1));
    }
    cfg.train.validate();

    if (dump) {
        write_config(std::cout, cfg);
        return kOk;
    }
    if (app.get_subcommands().empty()) {
        std::cerr << "usage error: no command given\n(run 'conquer --help' for usage)\n";
        return kUsage;
    }
    if (replay->parsed()) {
        if (out.empty()) throw ArgumentError("replay needs --out");
        return cmd_replay(manifest_path, out);
    }
    if (out.empty()) throw ArgumentError("--out <dir> is required");

    // Record the command line exactly as given (subcommand first), without the program name.
    Run r(args, cfg, seed, out);
    try {
        if (gen->parsed()) {
            cmd_gen_data(r, kind, count);
        } else if (tb->parsed()) {
            cmd_train_base(r, data_path);
        } else if (tc->parsed()) {
            cmd_train_controller(r, base_path, data_path, objective, hw_lo, hw_hi);
        } else if (tbias->parsed()) {
            cmd_train_bias(r, base_path, data_path, patterns);
        } else if (smp->parsed()) {
            cmd_sample(r, circuit_path, controller_path, count);
        } else if (rhw->parsed()) {
            cmd_report_hw(r, samples_path, hw_lo, hw_hi);
        } else if (rbias->parsed()) {
            cmd_report_bias(r, circuit_path, controller_path, samples_path, patterns);
        } else if (rover->parsed()) {
            cmd_report_overhead(r, n_list, modes_list);
        } else if (rheat->parsed()) {
            cmd_report_heatmap(r, circuit_path);
        } else if (qasm->parsed()) {
            cmd_export_qasm(r, circuit_path, controller_path);
        }
    } catch (const TrainingDiverged &e) {
        std::ofstream f(r.path("diverged_state.iqp"));
        const std::vector<std::string> note{"diverged at iteration " + std::to_string(e.iteration())};
        write_circuit(f, e.state(), note);
        r.track("diverged_state.iqp");
        r.write_manifest();
        throw;
    }
    r.write_manifest();
    return kOk;
}

}  // namespace

int main(int argc, char **argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        return run(args, std::nullopt);
    } catch (const TrainingDiverged &e) {
        std::cerr << "error: training diverged: " << e.what() << " (state saved as diverged_state.iqp)\n";
        return kDiverged;
    } catch (const CapacityError &e) {
        std::cerr << "error: capacity exceeded: " << e.what() << '\n';
        return kCapacity;
    } catch (const FormatError &e) {
        std::cerr << "error: file or format problem: " << e.what() << '\n';
        return kFileError;
    } catch (const ArgumentError &e) {
        std::cerr << "error: invalid argument: " << e.what() << '\n';
        return kBadArgument;
    } catch (const InputChanged &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInputChanged;
    } catch (const fs::filesystem_error &e) {
        std::cerr << "error: file or format problem: " << e.what() << '\n';
        return kFileError;
    } catch (const std::exception &e) {
        std::cerr << "error: internal: " << e.what() << '\n';
        return kInternal;
    }
}
