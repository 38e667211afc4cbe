#include "conquer/evaluator.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "oracle/statevector.hpp"

using namespace conquer;

namespace {

Observable random_observable(unsigned n, std::mt19937_64 &rng) {
    Bits s = 0;
    while (s == 0) s = rng() & low_mask(n);
    return {s};
}

double fd_expval(const IQPCircuit &c, Observable s, std::size_t k, double h) {
    auto plus = c.theta(), minus = c.theta();
    plus[k] += h;
    minus[k] -= h;
    return (expval_exact(c.with_theta(plus), s) - expval_exact(c.with_theta(minus), s)) / (2 * h);
}

}  // namespace

TEST(full_distribution, zero_parameters_give_point_mass) {
    const auto c = build_full_order_circuit(5, 3);
    const auto d = full_distribution(c);
    EXPECT_EQ(d[0], 1.0);
    for (std::size_t x = 1; x < d.size(); ++x) EXPECT_LT(d.probabilities[x], 1e-30);
}

TEST(full_distribution, single_qubit_is_sin_squared) {
    const IQPCircuit c(1, {Generator::from_qubits({0})}, {std::numbers::pi / 4});
    EXPECT_NEAR(full_distribution(c)[1], 0.5, 1e-15);
    const IQPCircuit c2(1, {Generator::from_qubits({0})}, {0.3});
    EXPECT_NEAR(full_distribution(c2)[1], std::sin(0.3) * std::sin(0.3), 1e-15);
}

TEST(full_distribution, matches_gate_by_gate_statevector) {
    std::mt19937_64 rng(17);
    for (unsigned n = 1; n <= 10; ++n) {
        for (int trial = 0; trial < 5; ++trial) {
            const auto c = oracle::random_circuit(n, 2 * n + 3, std::min(n, 4u), rng, 2.0);
            const auto d = full_distribution(c);
            const auto ref = oracle::distribution(c);
            double total = 0.0;
            for (std::size_t x = 0; x < d.size(); ++x) {
                EXPECT_NEAR(d.probabilities[x], ref[x], 1e-12);
                total += d.probabilities[x];
            }
            EXPECT_NEAR(total, 1.0, 1e-9);
        }
    }
}

TEST(phase_table, gray_and_walsh_routes_agree) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 5; ++trial) {
        const auto c = oracle::random_circuit(12, 60, 5, rng, 1.5);
        const auto a = phases_gray(c);
        const auto b = phases_walsh(c);
        for (std::size_t w = 0; w < a.size(); ++w) ASSERT_NEAR(a[w], b[w], 1e-11);
    }
}

TEST(expval_exact, known_values) {
    const auto zero = build_full_order_circuit(4, 2);
    EXPECT_EQ(expval_exact(zero, Observable::on({0, 2})), 1.0);
    const IQPCircuit pair(2, {Generator::from_qubits({0, 1})}, {std::numbers::pi / 4});
    EXPECT_NEAR(expval_exact(pair, Observable::on({0})), 0.0, 1e-15);
    EXPECT_EQ(expval_exact(pair, Observable{}), 1.0);
    EXPECT_THROW(expval_exact(IQPCircuit(27), Observable::on({0})), CapacityError);
    EXPECT_THROW(expval_exact(IQPCircuit(3), Observable::on({3})), ArgumentError);
}

TEST(expval_exact, periodic_and_in_range) {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        const auto c = oracle::random_circuit(7, 15, 4, rng, 3.0);
        const auto s = random_observable(7, rng);
        const double v = expval_exact(c, s);
        EXPECT_LE(std::abs(v), 1 + 1e-12);
        auto t = c.theta();
        const std::size_t k = rng() % c.size();
        t[k] += 2 * std::numbers::pi;
        EXPECT_NEAR(expval_exact(c.with_theta(t), s), v, 1e-12);
    }
}

TEST(expval_mc, deterministic_branches) {
    Rng rng = make_stream(1);
    const auto zero = build_full_order_circuit(6, 3);
    const auto e = expval_mc(zero, Observable::on({1, 4}), 500, rng);
    EXPECT_EQ(e.value, 1.0);
    EXPECT_EQ(e.std_error, 0.0);

    const IQPCircuit none(3, {Generator::from_qubits({0, 1})}, {0.4});
    const auto id = expval_mc(none, Observable::on({0, 1}), 10, rng);  // A(S) empty
    EXPECT_EQ(id.value, 1.0);
    EXPECT_EQ(id.std_error, 0.0);

    const IQPCircuit single(1, {Generator::from_qubits({0})}, {0.7});
    const auto one = expval_mc(single, Observable::on({0}), 1000, rng);
    EXPECT_NEAR(one.value, 0.16996714290024104, 1e-12);
    EXPECT_THROW(expval_mc(single, Observable::on({0}), 0, rng), ArgumentError);
}

TEST(expval_mc, agrees_with_exact_oracle) {
    std::mt19937_64 gen(99);
    Rng rng = make_stream(7);
    int within = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto c = oracle::random_circuit(8, 20, 3, gen, 1.0);
        const auto s = random_observable(8, gen);
        const auto est = expval_mc(c, s, 4000, rng);
        const double exact = oracle::z_expval(oracle::distribution(c), s.support);
        within += std::abs(est.value - exact) <= 5 * est.std_error + 1e-12;
        EXPECT_LE(std::abs(est.value), 1.0 + 1e-12);
    }
    EXPECT_EQ(within, 100);
}

TEST(expval_mc, seed_determinism) {
    std::mt19937_64 gen(4);
    const auto c = oracle::random_circuit(10, 25, 3, gen);
    Rng a = make_stream(42), b = make_stream(42);
    const auto ea = expval_mc(c, Observable::on({0, 3}), 5000, a);
    const auto eb = expval_mc(c, Observable::on({0, 3}), 5000, b);
    EXPECT_EQ(ea.value, eb.value);
    EXPECT_EQ(ea.std_error, eb.std_error);
}

TEST(grad_expval_mc, single_gate_analytic) {
    const IQPCircuit single(1, {Generator::from_qubits({0})}, {0.7});
    Rng rng = make_stream(3);
    const auto g = grad_expval_mc(single, Observable::on({0}), 2000, rng);
    EXPECT_NEAR(g.value[0], -1.9708994599769203, 1e-12);
}

TEST(grad_expval_mc, inactive_components_are_exactly_zero) {
    const IQPCircuit c(3, {Generator::from_qubits({0}), Generator::from_qubits({1, 2}), Generator::from_qubits({0, 1})},
                       {0.3, 0.5, 0.2});
    Rng rng = make_stream(9);
    const auto g = grad_expval_mc(c, Observable::on({1, 2}), 3000, rng);
    EXPECT_EQ(g.value[1], 0.0);  // {1,2} overlaps S evenly
    EXPECT_EQ(g.std_error[1], 0.0);
    EXPECT_EQ(g.value[0], 0.0);
}

TEST(grad_expval_mc, matches_finite_differences) {
    std::mt19937_64 gen(31);
    Rng rng = make_stream(31);
    for (int trial = 0; trial < 10; ++trial) {
        const auto c = oracle::random_circuit(6, 14, 3, gen, 1.0);
        const auto s = random_observable(6, gen);
        const auto g = grad_expval_mc(c, s, 20000, rng);
        for (std::size_t k = 0; k < c.size(); ++k) {
            const double fd = fd_expval(c, s, k, 1e-5);
            EXPECT_LE(std::abs(g.value[k] - fd), std::max(5 * g.std_error[k], 1e-4)) << "gate " << k;
        }
    }
}

TEST(sample, point_mass_and_determinism) {
    const auto zero = build_full_order_circuit(4, 2);
    Rng rng = make_stream(1);
    for (auto x : sample(zero, 100, rng)) EXPECT_EQ(x, 0u);

    std::mt19937_64 gen(12);
    const auto c = oracle::random_circuit(6, 10, 3, gen);
    Rng a = make_stream(5), b = make_stream(5);
    EXPECT_EQ(sample(c, 1000, a), sample(c, 1000, b));
    EXPECT_THROW(sample(IQPCircuit(27), 1, a), CapacityError);
}

TEST(sample, single_qubit_binomial) {
    const IQPCircuit c(1, {Generator::from_qubits({0})}, {std::numbers::pi / 4});
    Rng rng = make_stream(77);
    const auto shots = sample(c, 100000, rng);
    const double ones = static_cast<double>(std::count(shots.begin(), shots.end(), Bits{1}));
    EXPECT_NEAR(ones / 1e5, 0.5, 0.005);
}

TEST(sample, frequencies_within_multinomial_bounds) {
    std::mt19937_64 gen(21);
    const auto c = oracle::random_circuit(10, 25, 3, gen, 1.0);
    const auto d = full_distribution(c);
    Rng rng = make_stream(21);
    const std::size_t shots = 200000;
    std::vector<double> counts(d.size(), 0.0);
    for (auto x : sample(d, shots, rng)) counts[x] += 1;
    const double n = static_cast<double>(shots);
    for (std::size_t x = 0; x < d.size(); ++x) {
        const double p = d.probabilities[x];
        EXPECT_LE(std::abs(counts[x] - n * p), 4 * std::sqrt(n * p * (1 - p)) + 1.0) << "outcome " << x;
    }
}

TEST(parameter_influence, known_values) {
    const auto zero = build_full_order_circuit(4, 2);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(parameter_influence(zero, 0, k), 0.0, 1e-15);
    const IQPCircuit c(1, {Generator::from_qubits({0})}, {0.3});
    EXPECT_NEAR(parameter_influence(c, 1, 0), 0.5646424733950354, 1e-14);
    EXPECT_THROW(parameter_influence(IQPCircuit(21, {Generator::from_qubits({0})}, {0.1}), 0, 0), CapacityError);
    EXPECT_THROW(parameter_influence(c, 0, 1), ArgumentError);
}

TEST(parameter_influence, matches_finite_differences) {
    std::mt19937_64 gen(8);
    for (int trial = 0; trial < 5; ++trial) {
        const auto c = oracle::random_circuit(6, 12, 3, gen, 1.0);
        for (std::size_t k = 0; k < c.size(); ++k) {
            const double h = 1e-5;
            auto plus = c.theta(), minus = c.theta();
            plus[k] += h;
            minus[k] -= h;
            const auto pp = oracle::distribution(c.with_theta(plus));
            const auto pm = oracle::distribution(c.with_theta(minus));
            for (Bits x = 0; x < 64; x += 7) {
                EXPECT_NEAR(parameter_influence(c, x, k), (pp[x] - pm[x]) / (2 * h), 1e-6);
            }
        }
    }
}

TEST(exact_gradient, reverse_mode_matches_finite_differences) {
    std::mt19937_64 gen(41);
    for (int trial = 0; trial < 5; ++trial) {
        const auto c = oracle::random_circuit(7, 20, 4, gen, 1.0);
        std::vector<double> weights(std::size_t{1} << 7);
        for (auto &w : weights) w = std::uniform_real_distribution<double>(-1, 1)(gen);
        auto loss = [&](const IQPCircuit &circ) {
            const auto p = oracle::distribution(circ);
            double acc = 0.0;
            for (std::size_t x = 0; x < p.size(); ++x) acc += weights[x] * p[x] * p[x];
            return acc;
        };
        const auto st = exact_state(c);
        std::vector<double> dl_dp(weights.size());
        for (std::size_t x = 0; x < dl_dp.size(); ++x) dl_dp[x] = 2 * weights[x] * st.distribution.probabilities[x];
        const auto g = exact_gradient(c, st, dl_dp);
        for (std::size_t k = 0; k < c.size(); ++k) {
            auto plus = c.theta(), minus = c.theta();
            plus[k] += 1e-5;
            minus[k] -= 1e-5;
            EXPECT_NEAR(g[k], (loss(c.with_theta(plus)) - loss(c.with_theta(minus))) / 2e-5, 1e-7);
        }
        // Entries for absent masks are derivatives w.r.t. a new gate at parameter zero.
        const auto all = exact_gradient_all_masks(st, dl_dp);
        const Generator absent = Generator::from_qubits({0, 6});
        if (c.find(absent) == c.size()) {
            const auto grown = embed_implicit(c, std::vector<Generator>{absent});
            auto plus = grown.theta(), minus = grown.theta();
            plus.back() = 1e-5;
            minus.back() = -1e-5;
            EXPECT_NEAR(all[absent.mask()], (loss(grown.with_theta(plus)) - loss(grown.with_theta(minus))) / 2e-5, 1e-7);
        }
    }
}

TEST(hierarchy, single_qubit_gates_dominate_own_marginal) {
    // Sensitivity of <Z_i> (hence p(x_i = 1)) to its singleton versus every order-6 gate.
    const unsigned n = 16;
    int dominated = 0;
    const int seeds = 20;
    for (int seed = 0; seed < seeds; ++seed) {
        const auto c = build_full_order_circuit(n, 6, init::order_balanced_gaussian(n, 0.2, 1000 + seed));
        const unsigned qubit = static_cast<unsigned>(seed) % n;
        const auto st = exact_state(c);
        std::vector<double> marginal(st.distribution.size());
        for (std::size_t x = 0; x < marginal.size(); ++x) marginal[x] = (x >> qubit) & 1;
        const auto g = exact_gradient(c, st, marginal);
        double single = 0.0, high = 0.0;
        for (std::size_t j = 0; j < c.size(); ++j) {
            if (c.generator(j).order() == 1 && c.generator(j).contains(qubit)) single = std::abs(g[j]);
            if (c.generator(j).order() == 6) high = std::max(high, std::abs(g[j]));
        }
        dominated += single > high;
    }
    EXPECT_GE(dominated, 18);
}
