#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fedfa/error.hpp"
#include "fedfa/experiment.hpp"

namespace fedfa {

using nlohmann::json;

namespace {

void require_object(const json& j, const std::string& where) {
    if (!j.is_object()) throw Error("bad-config", where + " must be a JSON object");
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    require_object(j, where);
    for (const auto& [key, _] : j.items())
        if (!allowed.count(key)) throw Error("bad-config", "unknown key '" + key + "' in " + where);
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw Error("bad-config", where + "." + key + ": " + e.what());
    }
}

std::vector<SectionSpec> parse_sections(const json& j) {
    if (!j.is_array() || j.empty()) throw Error("bad-config", "candidate must be a non-empty array of sections");
    std::vector<SectionSpec> out;
    for (const auto& s : j) {
        reject_unknown(s, {"depth", "width"}, "candidate section");
        SectionSpec sec;
        read(s, "depth", sec.depth, "section");
        read(s, "width", sec.width, "section");
        out.push_back(sec);
    }
    return out;
}

WidthAlignment parse_width(const std::string& s) {
    if (s == "slice") return WidthAlignment::slice;
    if (s == "filter_graft") return WidthAlignment::filter_graft;
    throw Error("bad-config", "fedfa_width must be slice or filter_graft");
}

FilterGraftMode parse_fg_mode(const std::string& s) {
    if (s == "function_preserving") return FilterGraftMode::function_preserving;
    if (s == "raw_appendix") return FilterGraftMode::raw_appendix;
    throw Error("bad-config", "filter_graft_mode must be function_preserving or raw_appendix");
}

}  // namespace

std::size_t ExperimentConfig::clients_per_round() const {
    return static_cast<std::size_t>(std::llround(participation * static_cast<double>(n_clients)));
}

std::vector<ArchSpec> ExperimentConfig::candidate_archs() const {
    std::vector<ArchSpec> out;
    for (std::size_t i = 0; i < candidates.size(); ++i)
        out.push_back({data.dim, data.n_classes, candidates[i], "candidate-" + std::to_string(i)});
    return out;
}

void validate(const ExperimentConfig& cfg) {
    if (cfg.n_clients == 0) throw Error("bad-config", "n_clients must be positive");
    if (!(cfg.participation > 0.0 && cfg.participation <= 1.0))
        throw Error("bad-config", "participation must lie in (0, 1]");
    if (cfg.clients_per_round() < 1) throw Error("bad-config", "participation selects no clients");
    if (cfg.candidates.empty()) throw Error("bad-config", "at least one candidate architecture required");
    if (!(cfg.local.lr > 0.0)) throw Error("bad-config", "local.lr must be positive");
    if (cfg.local.batch_size == 0) throw Error("bad-config", "local.batch_size must be positive");
    if (cfg.threads < 1) throw Error("bad-config", "threads must be >= 1");
    if (cfg.attack.lambda < 0.0) throw Error("bad-config", "attack.lambda must be >= 0");
    if (cfg.attack.target_class >= cfg.data.n_classes) throw Error("bad-config", "attack.target_class out of range");
    malicious_count(cfg.attack, cfg.n_clients);
    if (cfg.data.partition != "iid" && cfg.data.partition != "noniid")
        throw Error("bad-config", "data.partition must be iid or noniid");
    const auto archs = cfg.candidate_archs();
    try {
        max_arch(archs);
    } catch (const Error& e) {
        throw Error("bad-config", std::string("candidates: ") + e.what());
    }
    try {
        parse_aggregator(cfg.aggregator);
    } catch (const Error& e) {
        throw Error("bad-config", e.what());
    }
    const auto& p = cfg.arch_policy;
    if (p.rfind("fixed:", 0) == 0) {
        const std::size_t idx = std::stoul(p.substr(6));
        if (idx >= cfg.candidates.size()) throw Error("bad-config", "fixed arch index out of range");
    } else if (p != "paper_default" && p != "uniform_random") {
        throw Error("bad-config", "unknown arch_policy '" + p + "'");
    }
}

ExperimentConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw Error("bad-config", e.what());
    }
    ExperimentConfig cfg;
    reject_unknown(j, {"seed", "rounds", "local", "n_clients", "participation", "candidates", "arch_policy",
                       "aggregator", "aggregation", "share_sample_counts", "attack", "static_norm", "data",
                       "output", "threads"},
                   "config");
    read(j, "seed", cfg.seed, "config");
    read(j, "rounds", cfg.rounds, "config");
    read(j, "n_clients", cfg.n_clients, "config");
    read(j, "participation", cfg.participation, "config");
    read(j, "arch_policy", cfg.arch_policy, "config");
    read(j, "aggregator", cfg.aggregator, "config");
    read(j, "share_sample_counts", cfg.share_sample_counts, "config");
    read(j, "threads", cfg.threads, "config");

    if (j.contains("local")) {
        const auto& l = j["local"];
        reject_unknown(l, {"epochs", "lr", "batch_size"}, "local");
        read(l, "epochs", cfg.local.epochs, "local");
        read(l, "lr", cfg.local.lr, "local");
        read(l, "batch_size", cfg.local.batch_size, "local");
    }
    if (j.contains("candidates")) {
        if (!j["candidates"].is_array()) throw Error("bad-config", "candidates must be an array");
        for (const auto& c : j["candidates"]) cfg.candidates.push_back(parse_sections(c));
    }
    if (j.contains("aggregation")) {
        const auto& a = j["aggregation"];
        reject_unknown(a, {"include_bias_in_norm", "fedfa_width", "filter_graft_mode"}, "aggregation");
        read(a, "include_bias_in_norm", cfg.aggregation.include_bias_in_norm, "aggregation");
        if (a.contains("fedfa_width")) cfg.aggregation.fedfa_width = parse_width(a["fedfa_width"].get<std::string>());
        if (a.contains("filter_graft_mode"))
            cfg.aggregation.filter_graft_mode = parse_fg_mode(a["filter_graft_mode"].get<std::string>());
    }
    if (j.contains("attack")) {
        const auto& a = j["attack"];
        reject_unknown(a, {"fraction_malicious", "lambda", "mode", "target_class", "seed", "malicious_arch"},
                       "attack");
        read(a, "fraction_malicious", cfg.attack.fraction_malicious, "attack");
        read(a, "lambda", cfg.attack.lambda, "attack");
        read(a, "target_class", cfg.attack.target_class, "attack");
        read(a, "seed", cfg.attack.seed, "attack");
        if (a.contains("mode")) cfg.attack.mode = parse_attack_mode(a["mode"].get<std::string>());
        if (a.contains("malicious_arch")) {
            const auto s = a["malicious_arch"].get<std::string>();
            if (s != "largest" && s != "assigned") throw Error("bad-config", "malicious_arch must be largest or assigned");
            cfg.malicious_pick_largest = s == "largest";
        }
    }
    if (j.contains("static_norm")) {
        const auto& s = j["static_norm"];
        reject_unknown(s, {"mean", "std"}, "static_norm");
        read(s, "mean", cfg.static_norm.mean, "static_norm");
        read(s, "std", cfg.static_norm.std, "static_norm");
    }
    if (j.contains("data")) {
        const auto& d = j["data"];
        reject_unknown(d, {"n_classes", "dim", "train_per_class", "test_per_class", "spread", "partition",
                           "class_fraction"},
                       "data");
        read(d, "n_classes", cfg.data.n_classes, "data");
        read(d, "dim", cfg.data.dim, "data");
        read(d, "train_per_class", cfg.data.train_per_class, "data");
        read(d, "test_per_class", cfg.data.test_per_class, "data");
        read(d, "spread", cfg.data.spread, "data");
        read(d, "partition", cfg.data.partition, "data");
        read(d, "class_fraction", cfg.data.class_fraction, "data");
    }
    if (j.contains("output")) {
        const auto& o = j["output"];
        reject_unknown(o, {"dir", "dump_dataset", "write_checkpoint"}, "output");
        read(o, "dir", cfg.output.dir, "output");
        read(o, "dump_dataset", cfg.output.dump_dataset, "output");
        read(o, "write_checkpoint", cfg.output.write_checkpoint, "output");
    }
    validate(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("bad-config", "cannot open config " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["rounds"] = cfg.rounds;
    j["local"] = {{"epochs", cfg.local.epochs}, {"lr", cfg.local.lr}, {"batch_size", cfg.local.batch_size}};
    j["n_clients"] = cfg.n_clients;
    j["participation"] = cfg.participation;
    j["candidates"] = json::array();
    for (const auto& c : cfg.candidates) {
        json secs = json::array();
        for (const auto& s : c) secs.push_back({{"depth", s.depth}, {"width", s.width}});
        j["candidates"].push_back(secs);
    }
    j["arch_policy"] = cfg.arch_policy;
    j["aggregator"] = cfg.aggregator;
    j["aggregation"] = {
        {"include_bias_in_norm", cfg.aggregation.include_bias_in_norm},
        {"fedfa_width", cfg.aggregation.fedfa_width == WidthAlignment::slice ? "slice" : "filter_graft"},
        {"filter_graft_mode", cfg.aggregation.filter_graft_mode == FilterGraftMode::function_preserving
                                  ? "function_preserving"
                                  : "raw_appendix"}};
    j["share_sample_counts"] = cfg.share_sample_counts;
    j["attack"] = {{"fraction_malicious", cfg.attack.fraction_malicious},
                   {"lambda", cfg.attack.lambda},
                   {"mode", to_string(cfg.attack.mode)},
                   {"target_class", cfg.attack.target_class},
                   {"seed", cfg.attack.seed},
                   {"malicious_arch", cfg.malicious_pick_largest ? "largest" : "assigned"}};
    j["static_norm"] = {{"mean", cfg.static_norm.mean}, {"std", cfg.static_norm.std}};
    j["data"] = {{"n_classes", cfg.data.n_classes},         {"dim", cfg.data.dim},
                 {"train_per_class", cfg.data.train_per_class}, {"test_per_class", cfg.data.test_per_class},
                 {"spread", cfg.data.spread},               {"partition", cfg.data.partition},
                 {"class_fraction", cfg.data.class_fraction}};
    j["output"] = {{"dir", cfg.output.dir},
                   {"dump_dataset", cfg.output.dump_dataset},
                   {"write_checkpoint", cfg.output.write_checkpoint}};
    j["threads"] = cfg.threads;
    return j.dump(2);
}

}  // namespace fedfa
