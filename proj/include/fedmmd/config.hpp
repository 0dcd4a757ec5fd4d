#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "fedmmd/flsim.hpp"

namespace fedmmd {

using Json = nlohmann::json;

struct DatasetConfig {
    enum class Kind { synthetic, shards };
    Kind kind = Kind::synthetic;
    SynthConfig synth;
    double train_fraction = 0.8;
    std::string shard_dir;  // kind == shards

    std::string label() const;  // e.g. "synthetic(0.5,0.5)"
};

struct ModelConfig {
    int hidden = 20;
    Activation activation = Activation::relu;
};

// One experiment = one (method, penalty, dataset, FL schedule) cell, executed
// once per seed. Parsing is strict: unknown keys are rejected at every level.
struct ExperimentConfig {
    std::string name;
    Method method = Method::ditto;
    DatasetConfig dataset;
    ModelConfig model;
    int rounds = 15;
    int local_epochs = 5;
    int local_steps = -1;
    int batch_size = 10;
    TaskOptimizerConfig optimizer;
    PenaltyConfig penalty;
    bool kernel_reset_per_round = false;
    std::vector<uint64_t> seeds{2021, 2022, 2023};
    std::string output;  // default results root when the caller gives none

    static ExperimentConfig from_json(const Json& j);
    static ExperimentConfig from_string(const std::string& text);
    static ExperimentConfig from_file(const std::string& path);
    Json to_json() const;

    FlConfig fl_config(uint64_t seed, int threads) const;

    bool operator==(const ExperimentConfig& o) const { return to_json() == o.to_json(); }
};

// Set a dotted path (e.g. "penalty.lambda") in a JSON document. The value
// string is parsed as JSON when possible, otherwise taken as a string.
void json_set_path(Json& doc, const std::string& dotted, const std::string& value);

std::string method_name(Method m);
std::string feature_kind_name(FeatureKind k);

}  // namespace fedmmd
