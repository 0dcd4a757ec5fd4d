#include "fedmmd.h"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <set>
#include <string>

#include "fedmmd/harness.hpp"
#include "fedmmd/io.hpp"
#include "fedmmd/selfcheck.hpp"

using namespace fedmmd;

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out) std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

int fail(int code, const std::string& msg) {
    g_last_error = msg;
    return code;
}

template <typename Fn>
int guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const ShapeError& e) {
        return fail(FEDMMD_ERR_SHAPE, e.what());
    } catch (const DomainError& e) {
        return fail(FEDMMD_ERR_DOMAIN, e.what());
    } catch (const ConfigError& e) {
        return fail(FEDMMD_ERR_CONFIG, e.what());
    } catch (const NumericError& e) {
        return fail(FEDMMD_ERR_NUMERIC, e.what());
    } catch (const IoError& e) {
        return fail(FEDMMD_ERR_IO, e.what());
    } catch (const std::exception& e) {
        return fail(FEDMMD_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(FEDMMD_ERR_INTERNAL, "unknown error");
    }
}

Json summary_to_json(const RowSummary& row) {
    return Json{{"name", row.name},
                {"dir", row.dir},
                {"ok", row.ok},
                {"error", row.error},
                {"seeds", row.seeds},
                {"per_seed_accuracy", row.per_seed_accuracy},
                {"mean_accuracy", row.mean},
                {"stddev_accuracy", row.stddev},
                {"wall_seconds", row.wall_seconds}};
}

}  // namespace

struct fedmmd_experiment {
    Json doc;
};

extern "C" {

const char* fedmmd_version(void) { return "0.1.0"; }

const char* fedmmd_status_name(int status) {
    switch (status) {
        case FEDMMD_OK: return "ok";
        case FEDMMD_ERR_INVALID_ARGUMENT: return "invalid_argument";
        case FEDMMD_ERR_SHAPE: return "shape_error";
        case FEDMMD_ERR_DOMAIN: return "domain_error";
        case FEDMMD_ERR_CONFIG: return "config_error";
        case FEDMMD_ERR_NUMERIC: return "numeric_error";
        case FEDMMD_ERR_IO: return "io_error";
        case FEDMMD_ERR_INTERNAL: return "internal_error";
    }
    return "unknown";
}

const char* fedmmd_last_error(void) { return g_last_error.c_str(); }

void fedmmd_string_free(char* s) { std::free(s); }

int fedmmd_generate_dataset(const char* config_json, const char* out_dir) {
    if (!config_json || !out_dir) return fail(FEDMMD_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&]() -> int {
        Json spec;
        try {
            spec = Json::parse(config_json);
        } catch (const Json::exception& e) {
            throw ConfigError(std::string("invalid dataset JSON: ") + e.what());
        }
        for (auto it = spec.begin(); it != spec.end(); ++it) {
            static const std::set<std::string> allowed{
                "alpha",     "beta",         "clients",       "samples_per_client",
                "data_seed", "train_fraction", "dirichlet_alpha", "temperature",
                "input_dim", "hidden_dim",   "classes"};
            if (!allowed.count(it.key()))
                throw ConfigError("dataset spec: unknown key '" + it.key() + "'");
        }
        SynthConfig cfg;
        cfg.alpha = spec.value("alpha", 0.0);
        cfg.beta = spec.value("beta", 0.0);
        cfg.clients = spec.value("clients", 8);
        cfg.samples_per_client = spec.value("samples_per_client", 5000);
        cfg.temperature = spec.value("temperature", 2.0);
        cfg.input_dim = spec.value("input_dim", 60);
        cfg.hidden_dim = spec.value("hidden_dim", 20);
        cfg.classes = spec.value("classes", 10);
        cfg.seed = spec.value("data_seed", static_cast<uint64_t>(7));
        double train_fraction = spec.value("train_fraction", 0.8);

        std::vector<ClientShard> shards = generate_synthetic(cfg);
        if (spec.contains("dirichlet_alpha") && spec.at("dirichlet_alpha").is_number()) {
            // Pool all samples, then re-split by Dirichlet label skew.
            long total = 0;
            for (const auto& s : shards) total += static_cast<long>(s.labels.size());
            Matrix x(total, cfg.input_dim);
            std::vector<int> y(total);
            long at = 0;
            for (const auto& s : shards) {
                x.middleRows(at, s.features.rows()) = s.features;
                std::copy(s.labels.begin(), s.labels.end(), y.begin() + at);
                at += s.features.rows();
            }
            DirichletConfig dc{spec.at("dirichlet_alpha").get<double>(), cfg.clients, cfg.seed};
            auto parts = dirichlet_partition(y, dc);
            shards.clear();
            for (int k = 0; k < cfg.clients; ++k) {
                ClientShard s;
                s.client_id = k;
                s.features.resize(parts[k].size(), cfg.input_dim);
                s.labels.resize(parts[k].size());
                for (size_t i = 0; i < parts[k].size(); ++i) {
                    s.features.row(i) = x.row(parts[k][i]);
                    s.labels[i] = y[parts[k][i]];
                }
                shards.push_back(std::move(s));
            }
        }

        ensure_dir(out_dir);
        for (auto& s : shards) {
            train_test_split(s, train_fraction, cfg.seed);
            Json meta{{"client_id", s.client_id},
                      {"samples", s.labels.size()},
                      {"input_dim", cfg.input_dim},
                      {"generator", spec},
                      {"train_count", s.train_idx.size()},
                      {"test_count", s.test_idx.size()}};
            char name[32];
            std::snprintf(name, sizeof(name), "client_%03d.shard", s.client_id);
            save_shard(std::string(out_dir) + "/" + name, s, meta.dump(2));
        }
        atomic_write_file(std::string(out_dir) + "/dataset.json",
                          Json{{"clients", shards.size()}, {"spec", spec}}.dump(2));
        g_last_error.clear();
        return FEDMMD_OK;
    });
}

int fedmmd_experiment_from_file(const char* path, fedmmd_experiment** out) {
    if (!path || !out) return fail(FEDMMD_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&]() -> int {
        Json doc;
        try {
            doc = Json::parse(read_file(path));
        } catch (const Json::exception& e) {
            throw ConfigError(std::string("invalid config JSON: ") + e.what());
        }
        ExperimentConfig::from_json(doc);  // validate
        *out = new fedmmd_experiment{std::move(doc)};
        g_last_error.clear();
        return FEDMMD_OK;
    });
}

int fedmmd_experiment_from_json(const char* json_text, fedmmd_experiment** out) {
    if (!json_text || !out) return fail(FEDMMD_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&]() -> int {
        Json doc;
        try {
            doc = Json::parse(json_text);
        } catch (const Json::exception& e) {
            throw ConfigError(std::string("invalid config JSON: ") + e.what());
        }
        ExperimentConfig::from_json(doc);
        *out = new fedmmd_experiment{std::move(doc)};
        g_last_error.clear();
        return FEDMMD_OK;
    });
}

int fedmmd_experiment_override(fedmmd_experiment* e, const char* dotted_key, const char* value) {
    if (!e || !dotted_key || !value) return fail(FEDMMD_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&]() -> int {
        Json doc = e->doc;
        json_set_path(doc, dotted_key, value);
        ExperimentConfig::from_json(doc);  // reject invalid overrides atomically
        e->doc = std::move(doc);
        g_last_error.clear();
        return FEDMMD_OK;
    });
}

int fedmmd_experiment_run(fedmmd_experiment* e, const char* out_dir, int threads,
                          char** summary_json) {
    if (!e) return fail(FEDMMD_ERR_INVALID_ARGUMENT, "null experiment");
    return guarded([&]() -> int {
        ExperimentConfig cfg = ExperimentConfig::from_json(e->doc);
        RowSummary row = run_experiment(cfg, out_dir ? out_dir : "", threads < 1 ? 1 : threads);
        if (summary_json) *summary_json = dup_string(summary_to_json(row).dump(2));
        if (!row.ok) return fail(FEDMMD_ERR_INTERNAL, "experiment failed: " + row.error);
        g_last_error.clear();
        return FEDMMD_OK;
    });
}

void fedmmd_experiment_free(fedmmd_experiment* e) { delete e; }

int fedmmd_sweep_run(const char* spec_path, const char* out_dir, int threads,
                     char** summary_json) {
    if (!spec_path) return fail(FEDMMD_ERR_INVALID_ARGUMENT, "null sweep path");
    return guarded([&]() -> int {
        SweepSpec spec = SweepSpec::from_file(spec_path);
        SweepResult result = run_sweep(spec, out_dir ? out_dir : "", threads < 1 ? 1 : threads);
        if (summary_json) {
            Json rows = Json::array();
            for (const auto& r : result.rows) rows.push_back(summary_to_json(r));
            *summary_json = dup_string(
                Json{{"rows", rows}, {"best_index", result.best_index}}.dump(2));
        }
        g_last_error.clear();
        return FEDMMD_OK;
    });
}

int fedmmd_report_emit(const char* results_dir, const char* out_dir, int max_over_mu) {
    if (!results_dir || !out_dir) return fail(FEDMMD_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&]() -> int {
        emit_report(results_dir, out_dir, max_over_mu != 0);
        g_last_error.clear();
        return FEDMMD_OK;
    });
}

int fedmmd_self_check(int full, char** report_text) {
    return guarded([&]() -> int {
        CheckReport report = run_self_check(full != 0);
        if (report_text) *report_text = dup_string(report.to_text());
        if (!report.all_passed()) return fail(FEDMMD_ERR_INTERNAL, "self-check failed");
        g_last_error.clear();
        return FEDMMD_OK;
    });
}

}  // extern "C"
