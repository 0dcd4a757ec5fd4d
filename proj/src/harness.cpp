#include "fedmmd/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fedmmd/io.hpp"

namespace fedmmd {

namespace fs = std::filesystem;

std::pair<double, double> mean_stddev(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 0.0};
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

std::vector<ClientShard> load_dataset(const DatasetConfig& dataset) {
    std::vector<ClientShard> shards;
    if (dataset.kind == DatasetConfig::Kind::synthetic) {
        shards = generate_synthetic(dataset.synth);
        for (auto& s : shards)
            train_test_split(s, dataset.train_fraction, dataset.synth.seed);
        return shards;
    }
    std::vector<std::string> files;
    if (!fs::is_directory(dataset.shard_dir))
        throw IoError("shard directory not found: " + dataset.shard_dir);
    for (const auto& e : fs::directory_iterator(dataset.shard_dir))
        if (e.path().extension() == ".shard") files.push_back(e.path().string());
    if (files.empty()) throw IoError("no .shard files in " + dataset.shard_dir);
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        ClientShard s = load_shard(f);
        if (s.train_idx.empty() || s.test_idx.empty())
            train_test_split(s, dataset.train_fraction, 7);
        shards.push_back(std::move(s));
    }
    return shards;
}

namespace {

Json round_report_json(const RoundReport& r) {
    Json clients = Json::array();
    for (const auto& c : r.clients) {
        Json cj{{"id", c.id},
                {"train_loss", c.train_loss},
                {"test_accuracy", c.test_accuracy},
                {"weight_penalty", c.weight_penalty},
                {"feature_penalty", c.feature_penalty}};
        if (!c.kernel_beta.empty()) cj["kernel_beta"] = c.kernel_beta;
        if (c.kernel_objective != 0.0) cj["kernel_objective"] = c.kernel_objective;
        clients.push_back(std::move(cj));
    }
    return Json{{"round", r.round},
                {"mean_test_accuracy", r.mean_test_accuracy},
                {"wall_ms", r.wall_ms},
                {"clients", clients}};
}

MlpSpec model_spec_for(const ExperimentConfig& cfg, const std::vector<ClientShard>& shards) {
    int input_dim = static_cast<int>(shards.front().features.cols());
    int classes = 0;
    for (const auto& s : shards)
        for (int y : s.labels) classes = std::max(classes, y + 1);
    return MlpSpec::task_net(input_dim, cfg.model.hidden, classes, cfg.model.activation);
}

}  // namespace

RowSummary run_experiment(const ExperimentConfig& cfg, const std::string& out_root, int threads) {
    const std::string root = out_root.empty() ? (cfg.output.empty() ? "runs" : cfg.output)
                                              : out_root;
    RowSummary row;
    row.name = cfg.name;
    row.dir = root + "/" + cfg.name;
    row.seeds = cfg.seeds;
    row.config = cfg.to_json();
    ensure_dir(row.dir);

    auto t0 = std::chrono::steady_clock::now();
    try {
        std::vector<ClientShard> shards = load_dataset(cfg.dataset);
        MlpSpec spec = model_spec_for(cfg, shards);
        for (uint64_t seed : cfg.seeds) {
            std::string seed_dir = row.dir + "/seed_" + std::to_string(seed);
            ensure_dir(seed_dir);
            Federation fed(spec, shards, cfg.fl_config(seed, threads));
            std::ostringstream lines;
            for (int t = 0; t < cfg.rounds; ++t)
                lines << round_report_json(fed.run_round()).dump() << '\n';
            atomic_write_file(seed_dir + "/rounds.jsonl", lines.str());
            fed.checkpoint(seed_dir);

            double acc = fed.uniform_average_accuracy();
            Json per_client = Json::array();
            for (int i = 0; i < fed.num_clients(); ++i) per_client.push_back(fed.client_accuracy(i));
            atomic_write_file(seed_dir + "/run.json",
                              Json{{"seed", seed},
                                   {"final_accuracy", acc},
                                   {"per_client_accuracy", per_client}}
                                  .dump(2));
            row.per_seed_accuracy.push_back(acc);
        }
        auto [mean, sd] = mean_stddev(row.per_seed_accuracy);
        row.mean = mean;
        row.stddev = sd;
        row.ok = true;
    } catch (const std::exception& e) {
        row.ok = false;
        row.error = e.what();
        atomic_write_file(row.dir + "/error.json", Json{{"error", row.error}}.dump(2));
    }
    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (row.ok) {
        atomic_write_file(row.dir + "/summary.json",
                          Json{{"name", row.name},
                               {"config", row.config},
                               {"seeds", row.seeds},
                               {"per_seed_accuracy", row.per_seed_accuracy},
                               {"mean_accuracy", row.mean},
                               {"stddev_accuracy", row.stddev},
                               {"wall_seconds", row.wall_seconds},
                               {"metadata",
                                {{"stddev_convention", "sample"},
                                 {"accuracy_scale", "fraction"}}}}
                              .dump(2));
    }
    return row;
}

SweepSpec SweepSpec::from_json(const Json& j) {
    if (!j.is_object() || !j.contains("base") || !j.contains("grid"))
        throw ConfigError("sweep spec needs 'base' and 'grid'");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (it.key() != "base" && it.key() != "grid")
            throw ConfigError("sweep spec: unknown key '" + it.key() + "'");
    SweepSpec s;
    s.base = j.at("base");
    ExperimentConfig::from_json(s.base);  // validate early
    const Json& g = j.at("grid");
    if (!g.is_object()) throw ConfigError("sweep grid must be an object");
    for (auto it = g.begin(); it != g.end(); ++it) {
        if (!it.value().is_array() || it.value().empty())
            throw ConfigError("sweep grid values must be nonempty arrays");
        s.grid.emplace_back(it.key(), std::vector<Json>(it.value().begin(), it.value().end()));
    }
    return s;
}

SweepSpec SweepSpec::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open sweep spec: " + path);
    Json j;
    try {
        is >> j;
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("invalid sweep JSON: ") + e.what());
    }
    return from_json(j);
}

namespace {

std::string value_token(const Json& v) {
    std::string s = v.is_string() ? v.get<std::string>() : v.dump();
    for (auto& ch : s)
        if (ch == '.' ) ch = 'p';
    return s;
}

double config_number(const Json& cfg, const char* a, const char* b) {
    if (cfg.contains(a) && cfg.at(a).contains(b) && cfg.at(a).at(b).is_number())
        return cfg.at(a).at(b).get<double>();
    return 0.0;
}

}  // namespace

SweepResult run_sweep(const SweepSpec& spec, const std::string& out_root, int threads) {
    // Cartesian expansion in deterministic order.
    std::vector<std::map<std::string, Json>> points{{}};
    for (const auto& [key, values] : spec.grid) {
        std::vector<std::map<std::string, Json>> next;
        for (const auto& p : points)
            for (const auto& v : values) {
                auto q = p;
                q[key] = v;
                next.push_back(std::move(q));
            }
        points = std::move(next);
    }

    SweepResult result;
    for (const auto& point : points) {
        Json doc = spec.base;
        std::string suffix;
        for (const auto& [key, v] : point) {
            json_set_path(doc, key, v.dump());
            std::string short_key = key.substr(key.find_last_of('.') + 1);
            suffix += "__" + short_key + "=" + value_token(v);
        }
        doc["name"] = spec.base.at("name").get<std::string>() + suffix;
        try {
            ExperimentConfig cfg = ExperimentConfig::from_json(doc);
            result.rows.push_back(run_experiment(cfg, out_root, threads));
        } catch (const std::exception& e) {
            RowSummary bad;
            bad.name = doc.value("name", "?");
            bad.ok = false;
            bad.error = e.what();
            result.rows.push_back(std::move(bad));
        }
    }

    for (size_t i = 0; i < result.rows.size(); ++i) {
        const auto& r = result.rows[i];
        if (!r.ok) continue;
        if (result.best_index < 0) {
            result.best_index = static_cast<int>(i);
            continue;
        }
        const auto& best = result.rows[result.best_index];
        double li = config_number(r.config, "penalty", "lambda");
        double lb = config_number(best.config, "penalty", "lambda");
        double mi = config_number(r.config, "penalty", "mu");
        double mb = config_number(best.config, "penalty", "mu");
        if (r.mean > best.mean ||
            (r.mean == best.mean && (li < lb || (li == lb && mi < mb))))
            result.best_index = static_cast<int>(i);
    }

    Json rows = Json::array();
    std::ostringstream csv;
    csv << "name,mean_accuracy,stddev_accuracy,ok,error\n";
    for (const auto& r : result.rows) {
        rows.push_back(Json{{"name", r.name},
                            {"ok", r.ok},
                            {"error", r.error},
                            {"mean_accuracy", r.mean},
                            {"stddev_accuracy", r.stddev},
                            {"per_seed_accuracy", r.per_seed_accuracy}});
        csv << r.name << ',' << r.mean << ',' << r.stddev << ',' << (r.ok ? 1 : 0) << ','
            << r.error << '\n';
    }
    std::string root = out_root.empty() ? "runs" : out_root;
    atomic_write_file(root + "/sweep_summary.json",
                      Json{{"rows", rows},
                           {"best_index", result.best_index},
                           {"best_name", result.best_index >= 0
                                             ? result.rows[result.best_index].name
                                             : ""}}
                          .dump(2));
    atomic_write_file(root + "/sweep_summary.csv", csv.str());
    return result;
}

// ---------------------------------------------------------------------------
// Reporting

namespace {

struct LoadedRow {
    Json config;
    double mean = 0.0;
    double stddev = 0.0;
    std::string dataset;
    Method method = Method::ditto;
    FeatureKind kind = FeatureKind::none;
    double lambda = 0.0, mu = 0.0;
    int fixed_r = 0;
    bool every_step = false;
};

std::string feature_column(const LoadedRow& r) {
    switch (r.kind) {
        case FeatureKind::cosine: return "cos_sim";
        case FeatureKind::mmdd: return "mmd_d";
        case FeatureKind::mkmmd: return r.every_step ? "mk_mmd_-1" : "mk_mmd_20";
        case FeatureKind::mkmmd_fixed_uniform: return "fixed_uniform";
        case FeatureKind::none: return "";
    }
    return "";
}

std::string cell(double mean, double sd) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(3);
    os << 100.0 * mean << " (" << 100.0 * sd << ")";
    return os.str();
}

}  // namespace

void emit_report(const std::string& results_dir, const std::string& out_dir, bool max_over_mu) {
    if (!fs::is_directory(results_dir)) throw IoError("results dir not found: " + results_dir);
    std::vector<LoadedRow> rows;
    std::vector<std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(results_dir))
        if (e.is_regular_file() && e.path().filename() == "summary.json")
            files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        Json j;
        try {
            j = Json::parse(read_file(f));
        } catch (const Json::exception&) {
            continue;
        }
        if (!j.contains("config") || !j.contains("mean_accuracy")) continue;
        LoadedRow r;
        r.config = j.at("config");
        r.mean = j.at("mean_accuracy").get<double>();
        r.stddev = j.value("stddev_accuracy", 0.0);
        ExperimentConfig cfg = ExperimentConfig::from_json(r.config);
        r.dataset = cfg.dataset.label();
        r.method = cfg.method;
        r.kind = cfg.penalty.feature_kind;
        r.lambda = cfg.penalty.lambda;
        r.mu = cfg.penalty.mu;
        r.fixed_r = cfg.penalty.fixed_r;
        r.every_step = cfg.penalty.schedule.kind == ScheduleConfig::Kind::every_step;
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw IoError("no summaries found under " + results_dir);
    ensure_dir(out_dir);

    std::vector<std::string> datasets;
    for (const auto& r : rows)
        if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end())
            datasets.push_back(r.dataset);
    std::sort(datasets.begin(), datasets.end());

    // cell picker: best mean among matching rows
    auto pick = [&](const std::string& ds, auto&& match) -> std::string {
        const LoadedRow* best = nullptr;
        for (const auto& r : rows)
            if (r.dataset == ds && match(r) && (!best || r.mean > best->mean)) best = &r;
        return best ? cell(best->mean, best->stddev) : "";
    };

    {  // Replacement table: feature penalties in place of the weight penalty
        std::ostringstream os;
        os << "dataset,fedavg,ditto,cos_sim,mmd_d,mk_mmd_-1,mk_mmd_20\n";
        for (const auto& ds : datasets) {
            os << ds << ',';
            os << pick(ds, [](const LoadedRow& r) { return r.method == Method::fedavg; }) << ',';
            os << pick(ds,
                       [](const LoadedRow& r) {
                           return r.method == Method::ditto && r.lambda > 0.0 && r.mu == 0.0;
                       })
               << ',';
            for (const char* col : {"cos_sim", "mmd_d", "mk_mmd_-1", "mk_mmd_20"}) {
                os << pick(ds, [&](const LoadedRow& r) {
                    return r.method == Method::ditto && r.lambda == 0.0 && r.mu > 0.0 &&
                           feature_column(r) == col;
                });
                os << (std::string(col) == "mk_mmd_20" ? '\n' : ',');
            }
        }
        atomic_write_file(out_dir + "/replace_table.csv", os.str());
    }

    {  // Augmentation table: feature penalties added to the weight penalty
        std::ostringstream os;
        os << "dataset,ditto,ditto+cos_sim,ditto+mmd_d,ditto+mk_mmd_-1,ditto+mk_mmd_20\n";
        for (const auto& ds : datasets) {
            os << ds << ',';
            os << pick(ds,
                       [](const LoadedRow& r) {
                           return r.method == Method::ditto && r.lambda > 0.0 && r.mu == 0.0;
                       })
               << ',';
            for (const char* col : {"cos_sim", "mmd_d", "mk_mmd_-1", "mk_mmd_20"}) {
                os << pick(ds, [&](const LoadedRow& r) {
                    return r.method == Method::ditto && r.lambda > 0.0 && r.mu > 0.0 &&
                           feature_column(r) == col;
                });
                os << (std::string(col) == "mk_mmd_20" ? '\n' : ',');
            }
        }
        atomic_write_file(out_dir + "/augment_table.csv", os.str());
    }

    {  // MR-MTL table
        std::ostringstream os;
        os << "dataset,mrmtl,mrmtl+mk_mmd_20,mrmtl+mmd_d\n";
        for (const auto& ds : datasets) {
            os << ds << ',';
            os << pick(ds,
                       [](const LoadedRow& r) {
                           return r.method == Method::mrmtl && r.mu == 0.0;
                       })
               << ',';
            os << pick(ds,
                       [](const LoadedRow& r) {
                           return r.method == Method::mrmtl && r.mu > 0.0 &&
                                  feature_column(r) == "mk_mmd_20";
                       })
               << ',';
            os << pick(ds, [](const LoadedRow& r) {
                return r.method == Method::mrmtl && r.mu > 0.0 && feature_column(r) == "mmd_d";
            }) << '\n';
        }
        atomic_write_file(out_dir + "/mrmtl_table.csv", os.str());
    }

    {  // Fixed-kernel ablation plot data
        Json series = Json::array();
        for (const auto& ds : datasets) {
            Json points = Json::array();
            for (int r_count = 1; r_count <= KernelBank::kDefaultSize; ++r_count) {
                const LoadedRow* best = nullptr;
                for (const auto& r : rows)
                    if (r.dataset == ds && r.kind == FeatureKind::mkmmd_fixed_uniform &&
                        r.fixed_r == r_count && (!best || r.mean > best->mean))
                        best = &r;
                if (best)
                    points.push_back(Json{{"r", r_count},
                                          {"mean", 100.0 * best->mean},
                                          {"std", 100.0 * best->stddev}});
            }
            if (points.empty()) continue;
            Json baselines = Json::object();
            for (const char* col : {"mk_mmd_-1", "mk_mmd_20", "mmd_d"}) {
                const LoadedRow* best = nullptr;
                for (const auto& r : rows)
                    if (r.dataset == ds && r.method == Method::ditto && r.mu > 0.0 &&
                        feature_column(r) == col && (!best || r.mean > best->mean))
                        best = &r;
                if (best)
                    baselines[col] =
                        Json{{"mean", 100.0 * best->mean}, {"std", 100.0 * best->stddev}};
            }
            series.push_back(
                Json{{"dataset", ds}, {"points", points}, {"optimized", baselines}});
        }
        atomic_write_file(out_dir + "/fixed_kernel_ablation.json", Json{{"series", series}}.dump(2));
    }

    {  // Lambda-sweep plot data
        Json series = Json::array();
        for (const auto& ds : datasets) {
            std::map<std::string, std::map<double, std::pair<double, double>>> families;
            for (const auto& r : rows) {
                if (r.dataset != ds || r.method != Method::ditto) continue;
                std::string fam = r.mu == 0.0 ? "ditto" : "ditto+" + feature_column(r);
                if (!max_over_mu && r.mu != 0.0)
                    fam += "@mu=" + std::to_string(r.mu);
                auto& slot = families[fam];
                auto it = slot.find(r.lambda);
                if (it == slot.end() || r.mean > it->second.first)
                    slot[r.lambda] = {r.mean, r.stddev};
            }
            for (const auto& [fam, pts] : families) {
                if (pts.empty()) continue;
                Json points = Json::array();
                for (const auto& [lambda, ms] : pts)
                    points.push_back(Json{{"lambda", lambda},
                                          {"mean", 100.0 * ms.first},
                                          {"std", 100.0 * ms.second}});
                series.push_back(Json{{"dataset", ds}, {"family", fam}, {"points", points}});
            }
        }
        atomic_write_file(out_dir + "/lambda_sweep.json",
                          Json{{"max_over_mu", max_over_mu}, {"series", series}}.dump(2));
    }
}

}  // namespace fedmmd
