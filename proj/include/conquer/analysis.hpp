#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "conquer/bits.hpp"
#include "conquer/circuit.hpp"
#include "conquer/controller.hpp"
#include "conquer/errors.hpp"
#include "conquer/evaluator.hpp"
#include "conquer/mmd.hpp"

namespace conquer {

// ---------------------------------------------------------------------------
// Hamming-weight histograms
// ---------------------------------------------------------------------------

struct HWHistogram {
    unsigned n = 0;
    std::vector<std::uint64_t> counts;  // index = weight, 0..n
    std::uint64_t total = 0;

    double fraction(int w) const { return static_cast<double>(counts[static_cast<std::size_t>(w)]) / total; }

    double mean() const {
        double m = 0.0;
        for (unsigned w = 0; w <= n; ++w) m += w * fraction(static_cast<int>(w));
        return m;
    }

    /// Population standard deviation of the weight.
    double stddev() const {
        const double mu = mean();
        double v = 0.0;
        for (unsigned w = 0; w <= n; ++w) v += (w - mu) * (w - mu) * fraction(static_cast<int>(w));
        return std::sqrt(v);
    }
};

inline HWHistogram hw_histogram(std::span<const Bits> samples, unsigned n) {
    if (samples.empty()) throw ArgumentError("hw_histogram needs at least one sample");
    if (n == 0 || n > kMaxQubits) throw ArgumentError("hw_histogram bit length must be in [1, 64]");
    HWHistogram h{n, std::vector<std::uint64_t>(n + 1, 0), samples.size()};
    for (auto x : samples) {
        if (x & ~low_mask(n)) throw ArgumentError("sample wider than " + std::to_string(n) + " bits");
        ++h.counts[static_cast<std::size_t>(hamming_weight(x))];
    }
    return h;
}

/// Fraction of shots with lo <= HW <= hi (bounds clipped to [0, n]).
inline double mass_in_range(const HWHistogram &h, int lo, int hi) {
    lo = std::max(lo, 0);
    hi = std::min(hi, static_cast<int>(h.n));
    std::uint64_t c = 0;
    for (int w = lo; w <= hi; ++w) c += h.counts[static_cast<std::size_t>(w)];
    return static_cast<double>(c) / h.total;
}

/// Exact weight distribution of a Born distribution.
inline std::vector<double> hw_probabilities(const BornDistribution &d) {
    std::vector<double> p(d.n_qubits + 1, 0.0);
    for (std::size_t x = 0; x < d.size(); ++x) p[static_cast<std::size_t>(hamming_weight(x))] += d[x];
    return p;
}

inline void write_hw_csv(std::ostream &out, const HWHistogram &h) {
    out << "weight,count,fraction\n";
    for (unsigned w = 0; w <= h.n; ++w) {
        out << w << ',' << h.counts[w] << ',' << format_double(h.fraction(static_cast<int>(w))) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Generation-bias statistics
// ---------------------------------------------------------------------------

struct BiasReport {
    std::vector<double> frequencies;
    double stddev = 0.0;           // population std across patterns
    double max_min_ratio = 1.0;    // +inf when some pattern is never produced
    double total_deviation = 0.0;  // sum_i |f_i - 1/K|
};

inline BiasReport bias_report(std::span<const double> frequencies) {
    if (frequencies.empty()) throw ArgumentError("bias_report needs at least one pattern");
    BiasReport r;
    r.frequencies.assign(frequencies.begin(), frequencies.end());
    r.stddev = std::sqrt(population_variance(frequencies));
    const auto [mn, mx] = std::minmax_element(frequencies.begin(), frequencies.end());
    r.max_min_ratio = *mn > 0.0 ? *mx / *mn : std::numeric_limits<double>::infinity();
    const double uniform = 1.0 / static_cast<double>(frequencies.size());
    for (double f : frequencies) r.total_deviation += std::abs(f - uniform);
    return r;
}

inline BiasReport bias_report(const BornDistribution &d, const ModeMap &modes) {
    const auto f = mode_probabilities(d, modes);
    return bias_report(f);
}

/// Sample version: every shot goes to its nearest pattern (ties to the lowest index).
inline BiasReport bias_report(std::span<const Bits> samples, const ModeMap &modes) {
    if (samples.empty()) throw ArgumentError("bias_report needs at least one sample");
    std::vector<std::uint64_t> counts(modes.patterns.size(), 0);
    for (auto x : samples) {
        if (x & ~low_mask(modes.n_qubits)) throw ArgumentError("sample wider than the pattern width");
        ++counts[modes.owner[static_cast<std::size_t>(x)]];
    }
    std::vector<double> f(counts.size());
    for (std::size_t k = 0; k < f.size(); ++k) f[k] = static_cast<double>(counts[k]) / samples.size();
    return bias_report(f);
}

/// Per-pattern rows. `importance` (optional, same length as patterns) is written as an extra column.
inline void write_bias_csv(std::ostream &out, const BiasReport &r, std::span<const Bits> patterns, unsigned n,
                           std::span<const double> importance = {}) {
    if (patterns.size() != r.frequencies.size()) throw ArgumentError("pattern count does not match the report");
    if (!importance.empty() && importance.size() != patterns.size())
        throw ArgumentError("importance count does not match the pattern count");
    out << "pattern,bits,frequency" << (importance.empty() ? "" : ",importance") << '\n';
    for (std::size_t k = 0; k < patterns.size(); ++k) {
        out << k << ',' << to_bitstring(patterns[k], n) << ',' << format_double(r.frequencies[k]);
        if (!importance.empty()) out << ',' << format_double(importance[k]);
        out << '\n';
    }
}

inline void write_bias_summary_csv(std::ostream &out, const BiasReport &r) {
    out << "# total_deviation = sum_i |f_i - 1/K| over the K patterns\n";
    out << "metric,value\n";
    out << "stddev," << format_double(r.stddev) << '\n';
    out << "max_min_ratio," << format_double(r.max_min_ratio) << '\n';
    out << "total_deviation," << format_double(r.total_deviation) << '\n';
}

/// Relative reduction (before - after) / before, used for before/after bias comparisons.
inline double relative_reduction(double before, double after) { return before == 0.0 ? 0.0 : (before - after) / before; }

// ---------------------------------------------------------------------------
// Parameter overhead of controllers
// ---------------------------------------------------------------------------

inline constexpr unsigned kOverheadMaxOrder = 6;

struct OverheadRow {
    unsigned n = 0;
    std::size_t base_params = 0;
    unsigned modes = 0;
    std::size_t controller_params = 0;  // all modes together
    double overhead_percent = 0.0;
    bool projected = false;
};

struct OverheadReport {
    std::vector<OverheadRow> rows;
};

/// Controller parameters of one weight-objective controller: n singles, n-1 NN pairs, n-2 NNN pairs.
inline std::size_t weight_controller_params(unsigned n) { return 3 * static_cast<std::size_t>(n) - 3; }

/// Rows for every (n, modes) pair. Sizes other than the 4x4 and 5x5 lattices are marked projected.
inline OverheadReport overhead_report(std::span<const unsigned> n_list, std::span<const unsigned> modes_list,
                                      unsigned max_order = kOverheadMaxOrder) {
    OverheadReport rep;
    for (unsigned n : n_list) {
        if (n < 4) throw ArgumentError("overhead_report needs n >= 4, got " + std::to_string(n));
        const std::size_t base = full_order_gate_count(n, std::min(max_order, n));
        for (unsigned m : modes_list) {
            if (m == 0) throw ArgumentError("overhead_report needs at least one mode");
            OverheadRow row;
            row.n = n;
            row.base_params = base;
            row.modes = m;
            row.controller_params = m * weight_controller_params(n);
            row.overhead_percent = 100.0 * static_cast<double>(row.controller_params) / static_cast<double>(base);
            row.projected = !(n == 16 || n == 25);
            rep.rows.push_back(row);
        }
    }
    return rep;
}

inline void write_overhead_csv(std::ostream &out, const OverheadReport &r) {
    out << "n,base_params,modes,controller_params,overhead_percent,projected\n";
    for (const auto &row : r.rows) {
        out << row.n << ',' << row.base_params << ',' << row.modes << ',' << row.controller_params << ','
            << format_double(row.overhead_percent) << ',' << (row.projected ? 1 : 0) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Parameter heatmap
// ---------------------------------------------------------------------------

inline void write_heatmap_csv(std::ostream &out, const WeightMatrix &m) {
    for (unsigned i = 0; i < m.n; ++i) {
        for (unsigned j = 0; j < m.n; ++j) out << (j ? "," : "") << format_double(m(i, j));
        out << '\n';
    }
}

/// Square grid, white (0) to dark blue (largest entry). Cell (i, j) is row i, column j.
inline void write_heatmap_svg(std::ostream &out, const WeightMatrix &m, int cell = 24) {
    double peak = 0.0;
    for (double v : m.w) peak = std::max(peak, v);
    const int margin = 30;
    const int side = margin + cell * static_cast<int>(m.n) + 4;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << side << "\" height=\"" << side << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (unsigned i = 0; i < m.n; ++i) {
        const int pos = margin + cell * static_cast<int>(i) + cell / 2;
        out << "<text x=\"" << pos << "\" y=\"20\" font-size=\"10\" text-anchor=\"middle\">" << i << "</text>\n";
        out << "<text x=\"20\" y=\"" << pos + 3 << "\" font-size=\"10\" text-anchor=\"end\">" << i << "</text>\n";
    }
    for (unsigned i = 0; i < m.n; ++i) {
        for (unsigned j = 0; j < m.n; ++j) {
            const double t = peak > 0.0 ? m(i, j) / peak : 0.0;
            const int r = static_cast<int>(std::lround(255 - 247 * t));
            const int g = static_cast<int>(std::lround(255 - 207 * t));
            const int b = static_cast<int>(std::lround(255 - 148 * t));
            out << "<rect x=\"" << margin + cell * static_cast<int>(j) << "\" y=\"" << margin + cell * static_cast<int>(i)
                << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"rgb(" << r << ',' << g << ',' << b
                << ")\"><title>" << i << ',' << j << ' ' << format_double(m(i, j)) << "</title></rect>\n";
        }
    }
    out << "</svg>\n";
}

}  // namespace conquer
