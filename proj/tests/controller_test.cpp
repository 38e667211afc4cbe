#include "conquer/controller.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

#include "conquer/evaluator.hpp"
#include "oracle/statevector.hpp"

using namespace conquer;

namespace {

IQPCircuit circuit_of(unsigned n, std::vector<std::pair<std::vector<unsigned>, double>> gates) {
    std::vector<Generator> g;
    std::vector<double> t;
    for (auto &[q, v] : gates) {
        g.push_back(Generator::from_qubits(std::span<const unsigned>(q)));
        t.push_back(v);
    }
    return IQPCircuit(n, std::move(g), std::move(t));
}

std::set<Bits> masks(const std::vector<Generator> &gates) {
    std::set<Bits> s;
    for (auto g : gates) s.insert(g.mask());
    return s;
}

}  // namespace

TEST(objective, default_weight_windows) {
    const ControlObjective high{ObjectiveKind::high_weight, {}}, low{ObjectiveKind::low_weight, {}},
        bal{ObjectiveKind::balanced, {}};
    EXPECT_EQ(high.weight_range(16), (WeightRange{11, 16}));
    EXPECT_EQ(low.weight_range(16), (WeightRange{0, 5}));
    EXPECT_EQ(bal.weight_range(16), (WeightRange{6, 10}));
    EXPECT_EQ(bal.weight_range(5), (WeightRange{2, 3}));
    EXPECT_EQ(high.weight_range(25), (WeightRange{17, 25}));
    const ControlObjective custom{ObjectiveKind::low_weight, WeightRange{0, 3}};
    EXPECT_EQ(custom.weight_range(16), (WeightRange{0, 3}));
    EXPECT_EQ(parse_objective_kind("low_weight"), ObjectiveKind::low_weight);
    EXPECT_EQ(parse_objective_kind(to_string(ObjectiveKind::bias_mitigation)), ObjectiveKind::bias_mitigation);
    EXPECT_THROW(parse_objective_kind("medium"), ArgumentError);
}

TEST(extract_weights, magnitudes_and_symmetry) {
    const auto zero = build_full_order_circuit(6, 3);
    const auto wz = extract_weights(zero);
    for (double v : wz.w) EXPECT_EQ(v, 0.0);

    const auto c = circuit_of(4, {{{0, 1}, -0.25}, {{2}, 0.7}, {{1, 2, 3}, 5.0}, {{1, 3}, 0.125}});
    const auto w = extract_weights(c);
    EXPECT_EQ(w(0, 1), 0.25);
    EXPECT_EQ(w(1, 0), 0.25);
    EXPECT_EQ(w(2, 2), 0.7);
    EXPECT_EQ(w(1, 3), 0.125);
    EXPECT_EQ(w(2, 3), 0.0);  // order-3 gates do not contribute
    EXPECT_EQ(w.row_strength[1], 0.375);
    EXPECT_EQ(w.row_strength[2], 0.0);  // diagonal excluded

    std::mt19937_64 rng(2);
    const auto r = oracle::random_circuit(8, 30, 3, rng);
    const auto wr = extract_weights(r);
    for (unsigned i = 0; i < 8; ++i)
        for (unsigned j = 0; j < 8; ++j) {
            EXPECT_EQ(wr(i, j), wr(j, i));
            EXPECT_GE(wr(i, j), 0.0);
        }
}

TEST(get_control_gates, weight_objectives_use_next_nearest_pairs) {
    const IQPCircuit empty(16);
    const auto g = get_control_gates({ObjectiveKind::high_weight, {}}, 16, empty);
    ASSERT_EQ(g.size(), 14u);
    for (unsigned i = 0; i < 14; ++i) EXPECT_EQ(g[i], Generator::from_qubits({i, i + 2}));
    EXPECT_EQ(get_control_gates({ObjectiveKind::low_weight, {}}, 16, empty), g);
    EXPECT_TRUE(get_control_gates({ObjectiveKind::balanced, {}}, 16, empty).empty());
}

TEST(get_control_gates, bias_mitigation_hand_trace) {
    // W[0][1] = 0.5, everything else 0: row strengths (0.5, 0.5, 0, 0), mean 0.25.
    const auto base = circuit_of(4, {{{0, 1}, 0.5}});
    const auto g = get_control_gates({ObjectiveKind::bias_mitigation, {}}, 4, base);
    std::set<Bits> expect;
    for (unsigned i = 0; i < 4; ++i)
        for (unsigned j = i + 1; j < 4; ++j)
            if (!(i == 0 && j == 1)) expect.insert(Generator::from_qubits({i, j}).mask());
    expect.insert(Generator::from_qubits({2}).mask());
    expect.insert(Generator::from_qubits({3}).mask());
    EXPECT_EQ(masks(g), expect);
    EXPECT_EQ(g.size(), expect.size());
    EXPECT_TRUE(std::is_sorted(g.begin(), g.end(), canonical_less));
}

TEST(get_control_gates, bias_selection_monotone_in_threshold) {
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 10; ++rep) {
        const auto base = oracle::random_circuit(10, 40, 2, rng, 0.3);
        std::set<Bits> prev;
        for (double t : {0.0, 0.05, 0.1, 0.2, 0.4}) {
            BiasSelection sel;
            sel.threshold = t;
            std::set<Bits> pairs;
            for (auto g : get_control_gates({ObjectiveKind::bias_mitigation, {}}, 10, base, sel))
                if (g.order() == 2) {
                    pairs.insert(g.mask());
                    const auto q = g.qubits();
                    EXPECT_LE(q[1] - q[0], 3u);
                }
            EXPECT_TRUE(std::includes(pairs.begin(), pairs.end(), prev.begin(), prev.end()));
            prev = pairs;
        }
    }
}

TEST(smart_initialize, centres_and_spreads) {
    std::vector<Generator> singles;
    for (unsigned i = 0; i < 16; ++i) singles.push_back(Generator::from_qubits({i}));
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng = make_stream(seed);
        const auto phi = smart_initialize(singles, {ObjectiveKind::high_weight, {}}, rng);
        double mean = 0.0;
        for (double v : phi) mean += v / phi.size();
        EXPECT_GE(mean, -0.12);
        EXPECT_LE(mean, -0.08);
        Rng rng2 = make_stream(seed);
        const auto low = smart_initialize(singles, {ObjectiveKind::low_weight, {}}, rng2);
        mean = 0.0;
        for (double v : low) mean += v / low.size();
        EXPECT_GE(mean, 0.08);
        EXPECT_LE(mean, 0.12);
    }
    const auto layout = controller_layout(16, {ObjectiveKind::balanced, {}}, IQPCircuit(16));
    Rng rng = make_stream(5);
    std::size_t small = 0, total = 0;
    for (int rep = 0; rep < 20; ++rep) {
        for (double v : smart_initialize(layout, {ObjectiveKind::balanced, {}}, rng)) {
            small += std::abs(v) < 0.05;
            ++total;
        }
    }
    EXPECT_EQ(small, total);

    Rng a = make_stream(9), b = make_stream(9);
    EXPECT_EQ(smart_initialize(layout, {ObjectiveKind::high_weight, {}}, a),
              smart_initialize(layout, {ObjectiveKind::high_weight, {}}, b));
    EXPECT_THROW(smart_initialize({}, {ObjectiveKind::balanced, {}}, a), ArgumentError);
}

TEST(construct_controller, parameter_counts) {
    const IQPCircuit base16(16);
    EXPECT_EQ(construct_controller(16, {ObjectiveKind::high_weight, {}}, base16, 1).circuit.size(), 45u);
    EXPECT_EQ(construct_controller(16, {ObjectiveKind::low_weight, {}}, base16, 1).circuit.size(), 45u);
    EXPECT_EQ(construct_controller(16, {ObjectiveKind::balanced, {}}, base16, 1).circuit.size(), 31u);
    EXPECT_EQ(construct_controller(25, {ObjectiveKind::high_weight, {}}, IQPCircuit(25), 1).circuit.size(), 72u);
    for (unsigned n = 4; n <= 30; ++n) {
        const auto b = construct_controller(n, {ObjectiveKind::low_weight, {}}, IQPCircuit(n), 2);
        EXPECT_EQ(b.circuit.size(), 3 * n - 3) << "n=" << n;
    }
    EXPECT_THROW(construct_controller(3, {ObjectiveKind::balanced, {}}, IQPCircuit(3), 1), ArgumentError);
}

TEST(construct_controller, layer_structure) {
    for (unsigned n : {4u, 5u, 9u, 16u}) {
        const auto b = construct_controller(n, {ObjectiveKind::high_weight, {}}, IQPCircuit(n), 3);
        const auto &gates = b.circuit.generators();
        for (unsigned i = 0; i + 1 < n; ++i) {
            EXPECT_EQ(std::count(gates.begin(), gates.end(), Generator::from_qubits({i, i + 1})), 1);
        }
        for (auto g : gates) EXPECT_LE(g.order(), 2);
        // Layer 1 leads with even pairs, then odd pairs.
        EXPECT_EQ(gates[0], Generator::from_qubits({0, 1}));
        EXPECT_EQ(gates[(n / 2)], Generator::from_qubits({1, 2}));
        EXPECT_EQ(gates.back(), Generator::from_qubits({n - 1}));
    }
    // Bias mitigation re-selects layer-1 pairs; they are kept once.
    const auto bias = construct_controller(8, {ObjectiveKind::bias_mitigation, {}}, IQPCircuit(8), 4);
    const auto &g = bias.circuit.generators();
    EXPECT_EQ(masks(g).size(), g.size());
}

TEST(construct_controller, zero_controller_leaves_base_unchanged) {
    std::mt19937_64 rng(6);
    const auto base = oracle::random_circuit(6, 20, 3, rng);
    auto ctrl = construct_controller(6, {ObjectiveKind::high_weight, {}}, base, 7).circuit;
    ctrl = ctrl.with_theta(std::vector<double>(ctrl.size(), 0.0));
    const auto p0 = full_distribution(base).probabilities;
    const auto p1 = full_distribution(combine_direct(base, ctrl)).probabilities;
    for (std::size_t x = 0; x < p0.size(); ++x) EXPECT_NEAR(p0[x], p1[x], 1e-12);
}

TEST(controller_io, round_trip_with_header) {
    const auto b = construct_controller(6, {ObjectiveKind::low_weight, WeightRange{0, 2}}, IQPCircuit(6), 42);
    std::stringstream ss;
    write_controller(ss, b);
    EXPECT_EQ(ss.str().rfind("# controller objective=low_weight seed=42 hw_lo=0 hw_hi=2\n", 0), 0u);
    const auto back = read_controller(ss);
    EXPECT_EQ(back.circuit, b.circuit);
    EXPECT_EQ(back.seed, 42u);
    EXPECT_EQ(back.objective.kind, ObjectiveKind::low_weight);
    EXPECT_EQ(back.objective.range, (WeightRange{0, 2}));

    std::istringstream plain("iqp 2 1\n0 0.5\n");
    EXPECT_THROW(read_controller(plain), FormatError);
    std::istringstream bad("# controller objective=sideways seed=1\niqp 2 1\n0 0.5\n");
    EXPECT_THROW(read_controller(bad), FormatError);
}

TEST(pattern_importance, counts_gates_inside_pattern) {
    const auto c = circuit_of(4, {{{0}, -0.5}, {{0, 1}, 0.25}, {{1, 2}, 1.0}, {{3}, 2.0}});
    const std::vector<Bits> patterns{0b0011, 0b1000};
    const auto imp = pattern_importance(c, patterns);
    EXPECT_EQ(imp[0], (std::vector<double>{0.75, 0.25, 0.0, 0.0}));
    EXPECT_EQ(imp[1], (std::vector<double>{0.0, 0.0, 0.0, 2.0}));
}

TEST(mean_abs_theta_by_order, averages_per_order) {
    const auto c = circuit_of(4, {{{0}, -0.5}, {{1}, 0.3}, {{0, 1}, 0.04}, {{1, 2, 3}, -0.1}});
    const auto m = mean_abs_theta_by_order(c);
    ASSERT_EQ(m.size(), 4u);
    EXPECT_DOUBLE_EQ(m[1], 0.4);
    EXPECT_DOUBLE_EQ(m[2], 0.04);
    EXPECT_DOUBLE_EQ(m[3], 0.1);
}
