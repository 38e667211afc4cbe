#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "conquer/circuit.hpp"
#include "conquer/crz.hpp"
#include "oracle/statevector.hpp"

#ifndef CONQUER_CLI
#error "CONQUER_CLI must point at the conquer executable"
#endif

namespace fs = std::filesystem;
using namespace conquer;

namespace {

class Cli : public ::testing::Test {
  protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("conquer_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    int run(const std::string &args) const {
        const std::string cmd = "cd '" + dir_.string() + "' && '" CONQUER_CLI "' " + args + " > out.log 2> err.log";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    std::string read(const std::string &rel) const {
        std::ifstream in(dir_ / rel, std::ios::binary);
        std::ostringstream os;
        os << in.rdbuf();
        return os.str();
    }

    void write(const std::string &rel, const std::string &text) const {
        std::ofstream(dir_ / rel, std::ios::binary) << text;
    }

    // 9-qubit Ising data and a short-trained order-2 base.
    void make_tiny_base() const {
        const std::string small =
            " --set data.ising_side=3 --set data.ising_burn_in_sweeps=200 --set base.order=2 --set train.max_iters=60";
        ASSERT_EQ(run("gen-data ising --samples 400 --seed 5 --out data" + small), 0);
        ASSERT_EQ(run("train-base --data data/data.bits --seed 6 --out base" + small), 0);
    }

    fs::path dir_;
};

}  // namespace

TEST_F(Cli, overhead_report_matches_closed_form) {
    ASSERT_EQ(run("report overhead --n 16 --modes 1,3,5,7 --out ov"), 0);
    const std::string csv = read("ov/overhead.csv");
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "n,base_params,modes,controller_params,overhead_percent,projected");
    const double expected[] = {0.302, 0.91, 1.51, 2.12};
    for (int k = 0; k < 4; ++k) {
        ASSERT_TRUE(std::getline(in, line));
        std::istringstream row(line);
        std::string n, base, modes, params, pct, proj;
        std::getline(row, n, ',');
        std::getline(row, base, ',');
        std::getline(row, modes, ',');
        std::getline(row, params, ',');
        std::getline(row, pct, ',');
        std::getline(row, proj, ',');
        EXPECT_EQ(n, "16");
        EXPECT_EQ(base, "14892");
        EXPECT_EQ(std::stoul(params), 45u * std::stoul(modes));
        EXPECT_NEAR(std::stod(pct), expected[k], 0.005);
        EXPECT_EQ(proj, "0");
    }
    EXPECT_TRUE(fs::exists(dir_ / "ov/manifest.txt"));
}

TEST_F(Cli, controller_training_is_deterministic_under_seed) {
    make_tiny_base();
    const std::string args = "train-controller --base base/base.iqp --data data/data.bits --objective low_weight "
                             "--set train.max_iters=40 --seed 11 --out ";
    ASSERT_EQ(run(args + "c1"), 0);
    ASSERT_EQ(run(args + "c2"), 0);
    EXPECT_FALSE(read("c1/history.csv").empty());
    EXPECT_EQ(read("c1/history.csv"), read("c2/history.csv"));
    EXPECT_EQ(read("c1/controller.iqp"), read("c2/controller.iqp"));
    ASSERT_EQ(run("train-controller --base base/base.iqp --data data/data.bits --objective low_weight "
                  "--set train.max_iters=40 --seed 12 --out c3"),
              0);
    EXPECT_NE(read("c1/controller.iqp"), read("c3/controller.iqp"));
}

TEST_F(Cli, replay_reproduces_csv_bytes_and_checks_inputs) {
    make_tiny_base();
    ASSERT_EQ(run("sample --circuit base/base.iqp --shots 300 --seed 9 --out s1"), 0);
    ASSERT_EQ(run("replay --manifest base/manifest.txt --out base_again"), 0);
    EXPECT_EQ(read("base/history.csv"), read("base_again/history.csv"));
    EXPECT_EQ(read("base/base.iqp"), read("base_again/base.iqp"));
    ASSERT_EQ(run("replay --manifest s1/manifest.txt --out s2"), 0);
    EXPECT_EQ(read("s1/hw.csv"), read("s2/hw.csv"));
    EXPECT_EQ(read("s1/samples.bits"), read("s2/samples.bits"));

    write("data/data.bits", read("data/data.bits") + "\n");
    EXPECT_EQ(run("replay --manifest base/manifest.txt --out base_bad"), 7);
    EXPECT_NE(read("err.log").find("changed since the recorded run"), std::string::npos);
}

TEST_F(Cli, export_qasm_state_matches_oracle) {
    std::mt19937_64 rng(21);
    const auto c = oracle::random_circuit(3, 6, 3, rng);
    write("c.iqp", to_text(c));
    ASSERT_EQ(run("export-qasm --circuit c.iqp --out q"), 0);
    std::istringstream in(read("q/circuit.qasm"));
    const auto prog = read_qasm(in);
    const auto a = oracle::simulate(prog), b = oracle::simulate(c);
    EXPECT_GT(oracle::fidelity(a, b), 1.0 - 1e-12);
    const auto pa = oracle::probabilities(a), pb = oracle::probabilities(b);
    for (std::size_t x = 0; x < pa.size(); ++x) EXPECT_NEAR(pa[x], pb[x], 1e-12);
}

TEST_F(Cli, dump_config_round_trips_through_config_flag) {
    ASSERT_EQ(run("--set train.learning_rate=0.02 --dump-config"), 0);
    const std::string dumped = read("out.log");
    EXPECT_NE(dumped.find("learning_rate = 0.02"), std::string::npos);
    write("run.cfg", dumped);
    ASSERT_EQ(run("--config run.cfg --dump-config"), 0);
    EXPECT_EQ(read("out.log"), dumped);
}

TEST_F(Cli, errors_have_distinct_messages_and_codes) {
    auto expect = [&](const std::string &args, int code, const std::string &needle) {
        EXPECT_EQ(run(args), code) << args;
        EXPECT_NE(read("err.log").find(needle), std::string::npos) << args << "\n" << read("err.log");
    };
    expect("train-base --data d.bits --out x --bogus", 2, "usage error");
    expect("train-base --data missing.bits --out x", 3, "input file not found: missing.bits");
    expect("--set train.nope=1 --dump-config", 3, "unknown config key 'train.nope'");
    expect("report overhead --n 3 --out x", 5, "needs n >= 4");
    expect("--set train.learning_rate=0 --dump-config", 5, "learning_rate must be positive");

    write("wide.iqp", to_text(build_full_order_circuit(21, 1)));
    write("wide.bits", "bits 21 1\n000000000000000000000\n");
    expect("train-bias --base wide.iqp --data wide.bits --patterns blob --out x", 5, "blob patterns need 16 qubits");
    write("wide.pat", "000000000000000000000\n111111111111111111111\n");
    expect("train-bias --base wide.iqp --data wide.bits --patterns wide.pat --out x", 4, "capacity exceeded");
}
