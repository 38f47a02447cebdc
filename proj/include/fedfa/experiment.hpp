#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedfa/adversary.hpp"
#include "fedfa/aggregation.hpp"
#include "fedfa/analysis.hpp"
#include "fedfa/data.hpp"
#include "fedfa/model.hpp"
#include "fedfa/training.hpp"

namespace fedfa {

struct DataConfig {
    std::size_t n_classes = 8;
    std::size_t dim = 16;
    std::size_t train_per_class = 200;
    std::size_t test_per_class = 100;
    double spread = 1.5;
    std::string partition = "iid";  // "iid" | "noniid"
    double class_fraction = 0.2;
};

struct OutputConfig {
    std::string dir;  // empty: nothing is written
    bool dump_dataset = false;
    bool write_checkpoint = true;
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::size_t rounds = 10;
    SgdConfig local;
    std::size_t n_clients = 10;
    double participation = 1.0;
    // Section lists; I/O dims come from the data config.
    std::vector<std::vector<SectionSpec>> candidates;
    std::string arch_policy = "paper_default";
    std::string aggregator = "fedfa";
    AggregationOptions aggregation;
    bool share_sample_counts = true;
    AttackConfig attack;
    bool malicious_pick_largest = true;
    StaticNormConstants static_norm;
    DataConfig data;
    OutputConfig output;
    int threads = 1;

    std::size_t clients_per_round() const;
    std::vector<ArchSpec> candidate_archs() const;
};

// Throws Error("bad-config") on schema violations, including unknown keys.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& cfg);
void validate(const ExperimentConfig& cfg);

// "paper_default": floor(n/2) seeded clients take the smallest candidate,
// the rest draw uniformly from the grid (a stand-in for a NAS selector).
// "uniform_random": every client draws uniformly. "fixed:<i>": all take
// candidate i.
std::vector<ArchSpec> assign_architectures(std::size_t n_clients, const std::vector<ArchSpec>& candidates,
                                           const std::string& policy, std::uint64_t seed);

// Seeded sample of m distinct clients, returned in ascending order.
std::vector<std::size_t> select_clients(std::size_t n_clients, std::size_t m, std::uint64_t seed,
                                        std::size_t round);

struct RoundMetrics {
    std::size_t round = 0;
    double global_accuracy = 0.0;
    double mean_local_accuracy = 0.0;
    double mean_local_loss = 0.0;
    double max_alpha = 1.0;
    double min_alpha = 1.0;
    bool gamma_complete = false;
    std::size_t selected = 0;
    std::size_t malicious_selected = 0;
    double wall_ms = 0.0;  // not written to the metrics CSV (non-deterministic)
};

struct ClientInfo {
    ArchSpec arch;
    Shard shard;        // what the client trains on (labels shuffled if malicious)
    Dataset local_test;
    bool malicious = false;
};

// Full simulation state; advanced one round at a time.
struct Simulation {
    ExperimentConfig config;
    Aggregator aggregator = Aggregator::fedfa;
    Dataset train;
    Dataset test;
    std::vector<ClientInfo> clients;
    std::size_t unused_samples = 0;
    ArchSpec global_arch;
    Model global;
    std::size_t round = 0;
    std::vector<ScalingReport> scaling_history;
};

Simulation init_simulation(const ExperimentConfig& cfg);
RoundMetrics run_round(Simulation& sim);

struct ExperimentReport {
    double initial_global_accuracy = 0.0;
    std::vector<RoundMetrics> rounds;
    MacEstimate macs;
    ConvergenceDiagnostic convergence;
    Model final_global;
    std::size_t unused_samples = 0;
    std::vector<std::string> client_archs;
    std::vector<bool> malicious;

    double final_global_accuracy() const {
        return rounds.empty() ? initial_global_accuracy : rounds.back().global_accuracy;
    }
};

ExperimentReport run_experiment(const ExperimentConfig& cfg);

// Fixed column order; one row per round.
void write_metrics_csv(const std::vector<RoundMetrics>& rows, std::ostream& out);

}  // namespace fedfa
