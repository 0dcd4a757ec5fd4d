#pragma once

#include <map>
#include <string>
#include <vector>

#include "fedmmd/config.hpp"

namespace fedmmd {

struct RowSummary {
    std::string name;
    std::string dir;
    std::vector<uint64_t> seeds;
    std::vector<double> per_seed_accuracy;  // fraction in [0, 1]
    double mean = 0.0;
    double stddev = 0.0;  // sample (n-1); 0 for a single seed
    double wall_seconds = 0.0;
    bool ok = false;
    std::string error;
    Json config;
};

// Loads or generates the dataset named by the config (shared across seeds).
std::vector<ClientShard> load_dataset(const DatasetConfig& dataset);

// One run per seed; writes rounds.jsonl, checkpoints, run.json per seed and
// an atomically written summary.json for the row. A failed seed aborts the
// row and records error.json in the row directory.
RowSummary run_experiment(const ExperimentConfig& cfg, const std::string& out_root, int threads);

struct SweepSpec {
    Json base;
    // Dotted config paths -> candidate values, expanded as a cartesian
    // product in the listed order.
    std::vector<std::pair<std::string, std::vector<Json>>> grid;

    static SweepSpec from_json(const Json& j);
    static SweepSpec from_file(const std::string& path);
};

struct SweepResult {
    std::vector<RowSummary> rows;
    int best_index = -1;  // argmax mean accuracy; ties to lowest lambda, then mu
};

SweepResult run_sweep(const SweepSpec& spec, const std::string& out_root, int threads);

// Scans a results tree for summary.json files and emits paper-style tables
// (CSV) plus plot-data (JSON) into out_dir. `max_over_mu` collapses the mu
// axis in the lambda-sweep series by taking the best mean.
void emit_report(const std::string& results_dir, const std::string& out_dir, bool max_over_mu);

// mean and sample standard deviation (n-1), stddev 0 when n < 2.
std::pair<double, double> mean_stddev(const std::vector<double>& v);

}  // namespace fedmmd
