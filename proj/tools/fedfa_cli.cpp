#include <optional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedfa/analysis.hpp"
#include "fedfa/error.hpp"
#include "fedfa/experiment.hpp"
#include "fedfa/kernels.hpp"
#include "oracles.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::string& out_dir, const std::string& aggregator,
            std::optional<std::uint64_t> seed, std::optional<int> threads) {
    fedfa::ExperimentConfig cfg = fedfa::load_config(config_path);
    if (!out_dir.empty()) cfg.output.dir = out_dir;
    if (!aggregator.empty()) cfg.aggregator = aggregator;
    if (seed) cfg.seed = *seed;
    if (threads) cfg.threads = *threads;
    fedfa::validate(cfg);
    const auto rep = fedfa::run_experiment(cfg);
    std::cout << "aggregator " << cfg.aggregator << ", rounds " << rep.rounds.size() << ", final global accuracy "
              << rep.final_global_accuracy() << '\n';
    if (!cfg.output.dir.empty()) std::cout << "outputs in " << cfg.output.dir << '\n';
    return 0;
}

int cmd_analyze(const std::vector<std::string>& checkpoints, const std::string& report, const std::string& other,
                const std::string& data, const std::string& tag, std::size_t k) {
    if (checkpoints.empty()) throw fedfa::Error("bad-args", "--checkpoint is required");
    if (report == "similarity") {
        for (const auto& path : checkpoints) {
            const auto rows = fedfa::section_similarity_table(fedfa::load_checkpoint(path), tag);
            fedfa::write_similarity_csv(rows, std::cout);
        }
    } else if (report == "scale") {
        if (other.empty()) throw fedfa::Error("bad-args", "scale report needs --other <checkpoint>");
        const auto rows = fedfa::scale_metrics(fedfa::load_checkpoint(checkpoints.front()), fedfa::load_checkpoint(other));
        fedfa::write_scale_csv(rows, std::cout);
    } else if (report == "variance") {
        if (data.empty()) throw fedfa::Error("bad-args", "variance report needs --data <csv>");
        const auto ds = fedfa::read_dataset_csv(data);
        std::vector<fedfa::Model> snaps;
        for (const auto& path : checkpoints) snaps.push_back(fedfa::load_checkpoint(path));
        fedfa::write_variance_csv(fedfa::logit_variance_rate(snaps, ds.inputs, k), std::cout);
    } else {
        throw fedfa::Error("bad-args", "unknown report '" + report + "'");
    }
    return 0;
}

int cmd_oracle(const std::string& name) {
    if (name == "list") {
        for (const auto& [n, desc] : fedfa::oracle::case_descriptions()) std::cout << n << "\t" << desc << '\n';
        return 0;
    }
    if (name == "all") {
        for (const auto& [n, _] : fedfa::oracle::case_descriptions())
            std::cout << n << ": " << fedfa::oracle::run_case(n) << '\n';
        return 0;
    }
    std::cout << name << ": " << fedfa::oracle::run_case(name) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Heterogeneous federated learning simulator"};
    app.require_subcommand(1);

    std::string config_path, out_dir, aggregator;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    auto* run = app.add_subcommand("run", "Run an experiment from a JSON config");
    run->add_option("--config", config_path, "Config file")->required();
    run->add_option("--out", out_dir, "Output directory (overrides output.dir)");
    run->add_option("--seed", seed, "Seed override");
    run->add_option("--aggregator", aggregator, "fedfa, fedfa_depth_only, fedfa_width_only, heterofl, flexifed, nefl, fedavg");
    run->add_option("--threads", threads, "OpenMP threads")->check(CLI::PositiveNumber);

    std::vector<std::string> checkpoints;
    std::string report, other, data, tag = "final";
    std::size_t k = 5;
    auto* analyze = app.add_subcommand("analyze", "Write an analysis report for checkpoints as CSV");
    analyze->add_option("--checkpoint", checkpoints, "Checkpoint (repeat for variance snapshots)")->required();
    analyze->add_option("--report", report, "similarity | scale | variance")
        ->required()
        ->check(CLI::IsMember({"similarity", "scale", "variance"}));
    analyze->add_option("--other", other, "Second checkpoint for the scale report");
    analyze->add_option("--data", data, "Dataset CSV for the variance report");
    analyze->add_option("--tag", tag, "Epoch tag for similarity rows");
    analyze->add_option("--k", k, "Steps used for the variance growth rate");

    std::string oracle_case;
    auto* oracle = app.add_subcommand("oracle", "Print brute-force oracle values");
    oracle->add_option("--case", oracle_case, "Case name, 'list' or 'all'")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(config_path, out_dir, aggregator, seed, threads);
        if (*analyze) return cmd_analyze(checkpoints, report, other, data, tag, k);
        if (*oracle) return cmd_oracle(oracle_case);
    } catch (const std::exception& e) {
        std::cerr << "fedfa: error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
