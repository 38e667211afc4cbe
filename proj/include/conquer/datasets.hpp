#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "conquer/bits.hpp"
#include "conquer/errors.hpp"
#include "conquer/parallel.hpp"
#include "conquer/rng.hpp"

namespace conquer {

/// Length-n bitstrings plus free-form provenance (generator name, parameters, seed).
struct BitstringDataset {
    unsigned n = 0;
    std::vector<Bits> samples;
    std::map<std::string, std::string> metadata;

    BitstringDataset() = default;
    BitstringDataset(unsigned n_bits, std::vector<Bits> s, std::map<std::string, std::string> meta = {})
        : n(n_bits), samples(std::move(s)), metadata(std::move(meta)) {
        if (n == 0 || n > kMaxQubits) throw ArgumentError("dataset bit length must be in [1, 64]");
        if (samples.empty()) throw ArgumentError("dataset must contain at least one sample");
        for (auto x : samples) {
            if (x & ~low_mask(n)) throw ArgumentError("dataset sample wider than " + std::to_string(n) + " bits");
        }
    }

    std::size_t size() const { return samples.size(); }
};

// ---------------------------------------------------------------------------
// 2D Ising model
// ---------------------------------------------------------------------------

/// Ferromagnetic (J = +1) Ising model on a periodic L x L lattice.
struct IsingConfig {
    unsigned L = 4;
    double temperature = 2.0;
    std::size_t burn_in_sweeps = 10000;
    std::size_t thinning_sweeps = 10;
    unsigned chains = 4;

    void validate() const {
        if (L < 2 || L * L > kMaxQubits) throw ArgumentError("Ising lattice side must be in [2, 8]");
        if (!(temperature > 0.0)) throw ArgumentError("Ising temperature must be positive");
        if (chains == 0) throw ArgumentError("Ising sampler needs at least one chain");
    }
};

/// Energy with each site coupled to its right and down neighbour (periodic wrap).
/// Spin +1 is bit 0 and spin -1 is bit 1.
inline double ising_energy(Bits x, unsigned L) {
    auto spin = [&](unsigned r, unsigned c) { return ((x >> (r * L + c)) & 1) ? -1.0 : 1.0; };
    double e = 0.0;
    for (unsigned r = 0; r < L; ++r) {
        for (unsigned c = 0; c < L; ++c) {
            e -= spin(r, c) * (spin(r, (c + 1) % L) + spin((r + 1) % L, c));
        }
    }
    return e;
}

/// Metropolis single-spin-flip sampler with random site selection. Each chain starts in a
/// ground state (all up or all down, chosen at random), burns in, then records the lattice
/// every `thinning_sweeps` sweeps. Samples are the row-major flattened lattice.
inline BitstringDataset ising_gibbs_sample(const IsingConfig &cfg, std::size_t n_samples, Rng &rng) {
    cfg.validate();
    if (n_samples == 0) throw ArgumentError("Ising sampler needs n_samples >= 1");
    const unsigned L = cfg.L, n = L * L;
    const std::uint64_t seed = rng();
    std::vector<std::vector<Bits>> per_chain(cfg.chains);
    parallel_blocks(cfg.chains, [&](std::size_t chain) {
        Rng local = make_stream(seed, {chain});
        const std::size_t quota = n_samples / cfg.chains + (chain < n_samples % cfg.chains ? 1 : 0);
        std::vector<int> spin(n, (local() & 1) ? -1 : 1);
        // Acceptance probabilities for dE = 2 s h, h in {-4..4}; only dE > 0 needs a table.
        std::array<double, 9> accept{};
        for (int h = -4; h <= 4; ++h) {
            const double de = 2.0 * h;
            accept[static_cast<std::size_t>(h + 4)] = de <= 0 ? 1.0 : std::exp(-de / cfg.temperature);
        }
        std::uniform_int_distribution<unsigned> site(0, n - 1);
        auto sweep = [&] {
            for (unsigned t = 0; t < n; ++t) {
                const unsigned i = site(local);
                const unsigned r = i / L, c = i % L;
                const int h = spin[r * L + (c + 1) % L] + spin[r * L + (c + L - 1) % L] + spin[((r + 1) % L) * L + c] +
                              spin[((r + L - 1) % L) * L + c];
                const int sh = spin[i] * h;  // dE = 2 s h
                if (sh <= 0 || uniform01(local) < accept[static_cast<std::size_t>(sh + 4)]) spin[i] = -spin[i];
            }
        };
        for (std::size_t s = 0; s < cfg.burn_in_sweeps; ++s) sweep();
        auto &out = per_chain[chain];
        out.reserve(quota);
        for (std::size_t k = 0; k < quota; ++k) {
            for (std::size_t s = 0; s < cfg.thinning_sweeps; ++s) sweep();
            Bits x = 0;
            for (unsigned i = 0; i < n; ++i) {
                if (spin[i] < 0) x |= Bits{1} << i;
            }
            out.push_back(x);
        }
    });
    std::vector<Bits> samples;
    samples.reserve(n_samples);
    for (auto &c : per_chain) samples.insert(samples.end(), c.begin(), c.end());
    std::ostringstream temp;
    temp << cfg.temperature;
    return BitstringDataset(n, std::move(samples),
                            {{"generator", "ising"},
                             {"L", std::to_string(L)},
                             {"temperature", temp.str()},
                             {"burn_in_sweeps", std::to_string(cfg.burn_in_sweeps)},
                             {"thinning_sweeps", std::to_string(cfg.thinning_sweeps)},
                             {"chains", std::to_string(cfg.chains)}});
}

// ---------------------------------------------------------------------------
// Binary blobs
// ---------------------------------------------------------------------------

inline constexpr unsigned kBlobSide = 4;
inline constexpr unsigned kBlobBits = kBlobSide * kBlobSide;

/// The eight 2x2 blocks of ones on a 4x4 grid, anchored at every (r, c) in {0,1,2}^2
/// except the centre (1, 1), in row-major anchor order. Bit index is row * 4 + column.
inline std::vector<Bits> blob_patterns() {
    std::vector<Bits> out;
    for (unsigned r = 0; r < 3; ++r) {
        for (unsigned c = 0; c < 3; ++c) {
            if (r == 1 && c == 1) continue;
            Bits x = 0;
            for (unsigned dr = 0; dr < 2; ++dr)
                for (unsigned dc = 0; dc < 2; ++dc) x |= Bits{1} << ((r + dr) * kBlobSide + c + dc);
            out.push_back(x);
        }
    }
    return out;
}

/// Uniform mixture over blob_patterns() with independent per-bit flips of probability noise_p.
/// When `sources` is given it receives the emitting pattern index of every sample.
inline BitstringDataset blob_dataset(double noise_p, std::size_t n_samples, Rng &rng,
                                     std::vector<std::size_t> *sources = nullptr) {
    if (!(noise_p >= 0.0 && noise_p < 0.5)) throw ArgumentError("blob noise must be in [0, 0.5)");
    if (n_samples == 0) throw ArgumentError("blob dataset needs n_samples >= 1");
    const auto patterns = blob_patterns();
    std::uniform_int_distribution<std::size_t> pick(0, patterns.size() - 1);
    std::vector<Bits> samples(n_samples);
    if (sources) sources->assign(n_samples, 0);
    for (std::size_t t = 0; t < n_samples; ++t) {
        const std::size_t src = pick(rng);
        if (sources) (*sources)[t] = src;
        Bits &x = samples[t];
        x = patterns[src];
        if (noise_p > 0.0) {
            for (unsigned i = 0; i < kBlobBits; ++i) {
                if (uniform01(rng) < noise_p) x ^= Bits{1} << i;
            }
        }
    }
    std::ostringstream p;
    p << noise_p;
    return BitstringDataset(kBlobBits, std::move(samples), {{"generator", "blob"}, {"noise_p", p.str()}});
}

// ---------------------------------------------------------------------------
// Files: "bits <n> <count>" then one bitstring per line (qubit 0 leftmost).
// Metadata goes to a sidecar of "key = value" lines.
// ---------------------------------------------------------------------------

inline void write_dataset(std::ostream &out, const BitstringDataset &d) {
    out << "bits " << d.n << ' ' << d.size() << '\n';
    for (auto x : d.samples) out << to_bitstring(x, d.n) << '\n';
}

inline BitstringDataset read_dataset(std::istream &in) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("dataset file is empty");
    std::istringstream header(line);
    std::string magic;
    long long n = -1, count = -1;
    if (!(header >> magic >> n >> count) || magic != "bits" || n <= 0 || n > 64 || count <= 0) {
        throw FormatError("expected header 'bits <n> <count>', got '" + line + "'");
    }
    std::vector<Bits> samples;
    samples.reserve(static_cast<std::size_t>(count));
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.size() != static_cast<std::size_t>(n)) {
            throw FormatError("sample '" + line + "' does not have " + std::to_string(n) + " bits");
        }
        try {
            samples.push_back(parse_bitstring(line));
        } catch (const ArgumentError &e) {
            throw FormatError(e.what());
        }
    }
    if (samples.size() != static_cast<std::size_t>(count)) {
        throw FormatError("dataset header promises " + std::to_string(count) + " samples, found " +
                          std::to_string(samples.size()));
    }
    return BitstringDataset(static_cast<unsigned>(n), std::move(samples));
}

inline void write_metadata(std::ostream &out, const std::map<std::string, std::string> &meta) {
    for (const auto &[k, v] : meta) out << k << " = " << v << '\n';
}

inline std::map<std::string, std::string> read_metadata(std::istream &in) {
    std::map<std::string, std::string> meta;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (line.empty() || line[0] == '#' || eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        meta[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return meta;
}

inline void save_dataset(const std::string &path, const BitstringDataset &d) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write dataset file " + path);
    write_dataset(out, d);
    std::ofstream meta(path + ".meta");
    if (!meta) throw FormatError("cannot write metadata file " + path + ".meta");
    write_metadata(meta, d.metadata);
}

inline BitstringDataset load_dataset(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open dataset file " + path);
    auto d = read_dataset(in);
    if (std::ifstream meta(path + ".meta"); meta) d.metadata = read_metadata(meta);
    return d;
}

}  // namespace conquer
