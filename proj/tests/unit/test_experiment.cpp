#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "fedfa/experiment.hpp"
#include "fedfa/kernels.hpp"
#include "helpers.hpp"

using namespace fedfa;
using test::error_code;

namespace {

const char* kSmallConfig = R"({
  "seed": 3,
  "rounds": 2,
  "local": {"epochs": 1, "lr": 0.05, "batch_size": 16},
  "n_clients": 6,
  "participation": 0.5,
  "candidates": [[{"depth": 1, "width": 4}, {"depth": 1, "width": 4}],
                 [{"depth": 2, "width": 8}, {"depth": 2, "width": 6}]],
  "aggregator": "fedfa",
  "attack": {"fraction_malicious": 0.34, "lambda": 20, "mode": "both"},
  "data": {"n_classes": 4, "dim": 5, "train_per_class": 30, "test_per_class": 10}
})";

std::string read_file(const std::filesystem::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("fedfa_test_" + name);
    std::filesystem::remove_all(p);
    return p;
}

double max_param_diff(const Model& a, const Model& b) {
    double d = 0.0;
    for (std::size_t li = 0; li < a.layers.size(); ++li) {
        if (!a.layers[li].is_linear()) continue;
        d = std::max(d, test::max_abs_diff(a.layers[li].weight, b.layers[li].weight));
        d = std::max(d, test::max_abs_diff(a.layers[li].bias, b.layers[li].bias));
    }
    return d;
}

struct CliResult {
    int status;
    std::string output;
};

CliResult run_cli(const std::string& args) {
    const std::string cmd = std::string(FEDFA_CLI_PATH) + " " + args + " 2>&1";
    CliResult r{0, ""};
    FILE* p = popen(cmd.c_str(), "r");
    std::array<char, 256> buf{};
    while (fgets(buf.data(), buf.size(), p)) r.output += buf.data();
    r.status = pclose(p);
    return r;
}

}  // namespace

TEST(Config, ParsesAndRoundTrips) {
    const auto cfg = parse_config(kSmallConfig);
    EXPECT_EQ(cfg.n_clients, 6u);
    EXPECT_EQ(cfg.clients_per_round(), 3u);
    EXPECT_EQ(cfg.candidates.size(), 2u);
    EXPECT_EQ(cfg.attack.mode, AttackMode::both);
    const auto again = parse_config(config_to_json(cfg));
    EXPECT_EQ(config_to_json(again), config_to_json(cfg));
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
    EXPECT_EQ(error_code([] { parse_config(R"({"candidates": [[{"depth":1,"width":2}]], "colour": 1})"); }), "bad-config");
    EXPECT_EQ(error_code([] { parse_config(R"({"candidates": [[{"depth":1,"width":2,"kernel":3}]]})"); }), "bad-config");
    EXPECT_EQ(error_code([] { parse_config(R"({"candidates": [[{"depth":1,"width":2}]], "participation": 0})"); }),
              "bad-config");
    EXPECT_EQ(error_code([] { parse_config(R"({"candidates": [[{"depth":1,"width":2}]], "participation": 1.5})"); }),
              "bad-config");
    EXPECT_EQ(error_code([] { parse_config(R"({"candidates": [[{"depth":1,"width":2}]], "n_clients": 10, "participation": 0.01})"); }),
              "bad-config");
    EXPECT_EQ(error_code([] { parse_config(R"({"candidates": [[{"depth":1,"width":2}]], "aggregator": "krum"})"); }),
              "bad-config");
    EXPECT_EQ(error_code([] { parse_config(R"({"candidates": [[{"depth":1,"width":2}], [{"depth":1,"width":2},{"depth":1,"width":2}]]})"); }),
              "bad-config");
    EXPECT_EQ(error_code([] { parse_config("{not json"); }), "bad-config");
    EXPECT_EQ(error_code([] { parse_config(R"({"rounds": 2})"); }), "bad-config");
}

TEST(Assignment, Policies) {
    const auto cfg = parse_config(kSmallConfig);
    const auto cands = cfg.candidate_archs();
    const auto half = assign_architectures(10, cands, "paper_default", 4);
    std::size_t smallest = 0;
    for (const auto& a : half) smallest += a == cands[0] ? 1 : 0;
    EXPECT_GE(smallest, 5u);
    EXPECT_EQ(assign_architectures(10, cands, "paper_default", 4), half);
    for (const auto& a : assign_architectures(7, cands, "fixed:1", 1)) EXPECT_EQ(a, cands[1]);
    for (const auto& a : assign_architectures(7, cands, "uniform_random", 1))
        EXPECT_TRUE(a == cands[0] || a == cands[1]);
    EXPECT_EQ(error_code([&] { assign_architectures(3, cands, "fixed:9", 1); }), "bad-config");
}

TEST(Selection, DistinctSortedAndUniform) {
    constexpr std::size_t n = 10, m = 3, rounds = 4000;
    std::vector<double> freq(n, 0.0);
    for (std::size_t r = 0; r < rounds; ++r) {
        const auto sel = select_clients(n, m, 17, r);
        ASSERT_EQ(sel.size(), m);
        for (std::size_t i = 1; i < m; ++i) ASSERT_LT(sel[i - 1], sel[i]);
        for (auto c : sel) freq[c] += 1;
    }
    // chi-square with 9 degrees of freedom; 27.9 is the 0.999 quantile
    const double expect = static_cast<double>(rounds * m) / n;
    double chi2 = 0.0;
    for (double f : freq) chi2 += (f - expect) * (f - expect) / expect;
    EXPECT_LT(chi2, 27.9);
    EXPECT_EQ(select_clients(n, m, 17, 5), select_clients(n, m, 17, 5));
}

TEST(Simulation, InitRespectsConfig) {
    const auto cfg = parse_config(kSmallConfig);
    const Simulation sim = init_simulation(cfg);
    ASSERT_EQ(sim.clients.size(), 6u);
    std::size_t mal = 0;
    const auto cands = cfg.candidate_archs();
    for (const auto& c : sim.clients) {
        mal += c.malicious ? 1 : 0;
        if (c.malicious) EXPECT_TRUE(c.arch.same_shape(cands[1]));
        EXPECT_TRUE(is_subarch(c.arch, sim.global_arch));
    }
    EXPECT_EQ(mal, 2u);
    EXPECT_TRUE(sim.global.arch.same_shape(sim.global_arch));
}

TEST(Simulation, SingleClientFedAvgEqualsLocalTraining) {
    auto cfg = parse_config(kSmallConfig);
    cfg.n_clients = 1;
    cfg.participation = 1.0;
    cfg.aggregator = "fedavg";
    cfg.attack.fraction_malicious = 0.0;
    cfg.local.batch_size = 1000;  // full batch, so the shuffle seed cannot matter
    Simulation sim = init_simulation(cfg);
    const Model expected = local_update(sim.global, sim.clients[0].shard, cfg.local, 99);
    run_round(sim);
    EXPECT_LT(max_param_diff(sim.global, expected), 1e-12);
}

TEST(Simulation, TwoIdenticalClientsMatchSingleClient) {
    auto cfg = parse_config(kSmallConfig);
    cfg.n_clients = 2;
    cfg.participation = 1.0;
    cfg.attack.fraction_malicious = 0.0;
    cfg.arch_policy = "fixed:1";
    cfg.local.batch_size = 1000;
    Simulation sim = init_simulation(cfg);
    sim.clients[1] = sim.clients[0];
    const Model expected = local_update(sim.global, sim.clients[0].shard, cfg.local, 1);
    const auto m = run_round(sim);
    EXPECT_LT(max_param_diff(sim.global, expected), 1e-9);
    EXPECT_TRUE(m.gamma_complete);
    EXPECT_NEAR(m.max_alpha, 1.0, 1e-9);
}

TEST(Experiment, RowCountsAndInitialEvaluation) {
    auto cfg = parse_config(kSmallConfig);
    cfg.rounds = 0;
    const auto r0 = run_experiment(cfg);
    EXPECT_TRUE(r0.rounds.empty());
    EXPECT_EQ(r0.final_global_accuracy(), r0.initial_global_accuracy);
    EXPECT_EQ(r0.macs.tmac, 0.0);
    cfg.rounds = 3;
    const auto r3 = run_experiment(cfg);
    ASSERT_EQ(r3.rounds.size(), 3u);
    EXPECT_EQ(r3.convergence.max_alpha.size(), 3u);
    std::ostringstream os;
    write_metrics_csv(r3.rounds, os);
    std::size_t lines = 0;
    for (char ch : os.str()) lines += ch == '\n';
    EXPECT_EQ(lines, 4u);
}

TEST(Experiment, DeterministicAcrossThreadCounts) {
    auto cfg = parse_config(kSmallConfig);
    const auto d1 = temp_dir("det1"), d2 = temp_dir("det2"), d3 = temp_dir("det3");
    cfg.output.dir = d1.string();
    run_experiment(cfg);
    cfg.output.dir = d2.string();
    run_experiment(cfg);
    cfg.output.dir = d3.string();
    cfg.threads = 4;
    run_experiment(cfg);
    kernels::set_num_threads(1);
    EXPECT_EQ(read_file(d1 / "metrics.csv"), read_file(d2 / "metrics.csv"));
    EXPECT_EQ(read_file(d1 / "metrics.csv"), read_file(d3 / "metrics.csv"));
    EXPECT_EQ(read_file(d1 / "global.ckpt"), read_file(d3 / "global.ckpt"));
    EXPECT_TRUE(std::filesystem::exists(d1 / "report.json"));
    for (const auto& d : {d1, d2, d3}) std::filesystem::remove_all(d);
}

TEST(Cli, RunAnalyzeAndErrors) {
    const auto dir = temp_dir("cli");
    std::filesystem::create_directories(dir);
    {
        auto cfg = parse_config(kSmallConfig);
        cfg.output.dump_dataset = true;
        std::ofstream(dir / "cfg.json") << config_to_json(cfg);
    }
    const auto out = dir / "out";
    auto r = run_cli("run --config " + (dir / "cfg.json").string() + " --out " + out.string() +
                     " --aggregator heterofl --seed 5 --threads 2");
    EXPECT_EQ(r.status, 0) << r.output;
    EXPECT_TRUE(std::filesystem::exists(out / "metrics.csv"));

    const auto ckpt = (out / "global.ckpt").string();
    r = run_cli("analyze --checkpoint " + ckpt + " --report similarity");
    EXPECT_EQ(r.status, 0) << r.output;
    EXPECT_NE(r.output.find("section,block_i,block_j,epoch_tag,similarity"), std::string::npos);
    r = run_cli("analyze --checkpoint " + ckpt + " --report scale --other " + ckpt);
    EXPECT_EQ(r.status, 0) << r.output;
    r = run_cli("analyze --checkpoint " + ckpt + " --checkpoint " + ckpt + " --report variance --data " +
                (out / "test.csv").string());
    EXPECT_EQ(r.status, 0) << r.output;
    EXPECT_NE(r.output.find("# rate,0"), std::string::npos);

    std::ofstream(dir / "bad.json") << R"({"candidates": [[{"depth":1,"width":2}]], "mystery": true})";
    r = run_cli("run --config " + (dir / "bad.json").string());
    EXPECT_NE(r.status, 0);
    EXPECT_NE(r.output.find("unknown key 'mystery'"), std::string::npos) << r.output;
    r = run_cli("run --config " + (dir / "missing.json").string());
    EXPECT_NE(r.status, 0);

    r = run_cli("oracle --case pcc-123-124");
    EXPECT_EQ(r.status, 0);
    EXPECT_NE(r.output.find("0.98198050606196"), std::string::npos);
    r = run_cli("oracle --case nope");
    EXPECT_NE(r.status, 0);
    std::filesystem::remove_all(dir);
}
