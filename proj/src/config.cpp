#include "fedmmd/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace fedmmd {

namespace {

void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

std::string get_required_string(const Json& j, const char* key, const char* where) {
    if (!j.contains(key)) throw ConfigError(std::string(where) + ": missing '" + key + "'");
    return j.at(key).get<std::string>();
}

Method parse_method(const std::string& s) {
    if (s == "fedavg") return Method::fedavg;
    if (s == "ditto") return Method::ditto;
    if (s == "mrmtl") return Method::mrmtl;
    throw ConfigError("unknown method '" + s + "'");
}

FeatureKind parse_feature_kind(const std::string& s) {
    if (s == "none") return FeatureKind::none;
    if (s == "cosine") return FeatureKind::cosine;
    if (s == "mkmmd") return FeatureKind::mkmmd;
    if (s == "mmdd") return FeatureKind::mmdd;
    if (s == "mkmmd_fixed_uniform") return FeatureKind::mkmmd_fixed_uniform;
    throw ConfigError("unknown feature_kind '" + s + "'");
}

Activation parse_activation(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "identity") return Activation::identity;
    throw ConfigError("unknown activation '" + s + "'");
}

}  // namespace

std::string method_name(Method m) {
    switch (m) {
        case Method::fedavg: return "fedavg";
        case Method::ditto: return "ditto";
        case Method::mrmtl: return "mrmtl";
    }
    return "?";
}

std::string feature_kind_name(FeatureKind k) {
    switch (k) {
        case FeatureKind::none: return "none";
        case FeatureKind::cosine: return "cosine";
        case FeatureKind::mkmmd: return "mkmmd";
        case FeatureKind::mmdd: return "mmdd";
        case FeatureKind::mkmmd_fixed_uniform: return "mkmmd_fixed_uniform";
    }
    return "?";
}

std::string DatasetConfig::label() const {
    if (kind == Kind::shards) return "shards:" + shard_dir;
    std::ostringstream os;
    os << "synthetic(" << synth.alpha << "," << synth.beta << ")";
    return os.str();
}

ExperimentConfig ExperimentConfig::from_json(const Json& j) {
    check_keys(j, {"name", "method", "dataset", "model", "fl", "penalty", "seeds", "output"},
               "config");
    ExperimentConfig c;
    c.name = get_required_string(j, "name", "config");
    c.method = parse_method(get_or<std::string>(j, "method", "ditto"));

    if (j.contains("dataset")) {
        const Json& d = j.at("dataset");
        std::string kind = get_or<std::string>(d, "kind", "synthetic");
        if (kind == "synthetic") {
            check_keys(d,
                       {"kind", "alpha", "beta", "clients", "samples_per_client", "temperature",
                        "input_dim", "hidden_dim", "classes", "data_seed", "train_fraction"},
                       "dataset");
            c.dataset.kind = DatasetConfig::Kind::synthetic;
            c.dataset.synth.alpha = get_or(d, "alpha", 0.0);
            c.dataset.synth.beta = get_or(d, "beta", 0.0);
            c.dataset.synth.clients = get_or(d, "clients", 8);
            c.dataset.synth.samples_per_client = get_or(d, "samples_per_client", 5000);
            c.dataset.synth.temperature = get_or(d, "temperature", 2.0);
            c.dataset.synth.input_dim = get_or(d, "input_dim", 60);
            c.dataset.synth.hidden_dim = get_or(d, "hidden_dim", 20);
            c.dataset.synth.classes = get_or(d, "classes", 10);
            c.dataset.synth.seed = get_or<uint64_t>(d, "data_seed", 7);
            c.dataset.train_fraction = get_or(d, "train_fraction", 0.8);
        } else if (kind == "shards") {
            check_keys(d, {"kind", "dir", "train_fraction"}, "dataset");
            c.dataset.kind = DatasetConfig::Kind::shards;
            c.dataset.shard_dir = get_required_string(d, "dir", "dataset");
            c.dataset.train_fraction = get_or(d, "train_fraction", 0.8);
        } else {
            throw ConfigError("unknown dataset kind '" + kind + "'");
        }
    }

    if (j.contains("model")) {
        const Json& m = j.at("model");
        check_keys(m, {"hidden", "activation"}, "model");
        c.model.hidden = get_or(m, "hidden", 20);
        c.model.activation = parse_activation(get_or<std::string>(m, "activation", "relu"));
    }

    if (j.contains("fl")) {
        const Json& f = j.at("fl");
        check_keys(f, {"rounds", "local_epochs", "local_steps", "batch_size", "optimizer"}, "fl");
        c.rounds = get_or(f, "rounds", 15);
        c.local_epochs = get_or(f, "local_epochs", 5);
        c.local_steps = get_or(f, "local_steps", -1);
        c.batch_size = get_or(f, "batch_size", 10);
        if (f.contains("optimizer")) {
            const Json& o = f.at("optimizer");
            std::string kind = get_or<std::string>(o, "kind", "sgd");
            if (kind == "sgd") {
                check_keys(o, {"kind", "lr", "momentum", "weight_decay"}, "optimizer");
                c.optimizer.kind = TaskOptimizerConfig::Kind::sgd;
                c.optimizer.sgd.lr = get_or(o, "lr", 0.01);
                c.optimizer.sgd.momentum = get_or(o, "momentum", 0.9);
                c.optimizer.sgd.weight_decay = get_or(o, "weight_decay", 0.001);
            } else if (kind == "adamw") {
                check_keys(o, {"kind", "lr", "beta1", "beta2", "eps", "weight_decay"},
                           "optimizer");
                c.optimizer.kind = TaskOptimizerConfig::Kind::adamw;
                c.optimizer.adamw.lr = get_or(o, "lr", 1e-3);
                c.optimizer.adamw.beta1 = get_or(o, "beta1", 0.9);
                c.optimizer.adamw.beta2 = get_or(o, "beta2", 0.999);
                c.optimizer.adamw.eps = get_or(o, "eps", 1e-8);
                c.optimizer.adamw.weight_decay = get_or(o, "weight_decay", 0.0);
            } else {
                throw ConfigError("unknown optimizer kind '" + kind + "'");
            }
        }
    }

    if (j.contains("penalty")) {
        const Json& p = j.at("penalty");
        check_keys(p,
                   {"lambda", "mu", "feature_kind", "fixed_r", "depth", "schedule", "mmdd",
                    "mkmmd", "standardize_features", "kernel_reset_per_round"},
                   "penalty");
        c.penalty.lambda = get_or(p, "lambda", 0.0);
        c.penalty.mu = get_or(p, "mu", 0.0);
        c.penalty.feature_kind =
            parse_feature_kind(get_or<std::string>(p, "feature_kind", "none"));
        c.penalty.fixed_r = get_or(p, "fixed_r", 18);
        c.penalty.depth = get_or(p, "depth", 1);
        if (c.penalty.lambda < 0.0 || c.penalty.mu < 0.0)
            throw ConfigError("penalty weights must be nonnegative");
        if (p.contains("schedule")) {
            const Json& s = p.at("schedule");
            check_keys(s, {"kind", "k", "z_batches"}, "schedule");
            std::string kind = get_or<std::string>(s, "kind", "every_k_steps");
            if (kind == "every_step")
                c.penalty.schedule.kind = ScheduleConfig::Kind::every_step;
            else if (kind == "every_k_steps")
                c.penalty.schedule.kind = ScheduleConfig::Kind::every_k_steps;
            else
                throw ConfigError("unknown schedule kind '" + kind + "'");
            c.penalty.schedule.k = get_or(s, "k", 20);
            c.penalty.schedule.z_batches = get_or(s, "z_batches", 50);
        }
        if (p.contains("mmdd")) {
            const Json& m = p.at("mmdd");
            check_keys(m, {"hidden", "depth", "lr", "steps_per_update", "variance_reg"}, "mmdd");
            c.penalty.mmdd.hidden = get_or(m, "hidden", 50);
            c.penalty.mmdd.depth = get_or(m, "depth", 4);
            c.penalty.mmdd.lr = get_or(m, "lr", 1e-3);
            c.penalty.mmdd.steps_per_update = get_or(m, "steps_per_update", 5);
            c.penalty.mmdd.variance_reg = get_or(m, "variance_reg", 1e-8);
        }
        if (p.contains("mkmmd")) {
            const Json& m = p.at("mkmmd");
            check_keys(m, {"epsilon_shift", "variance_reg"}, "mkmmd");
            c.penalty.mkmmd.epsilon_shift = get_or(m, "epsilon_shift", 1e-3);
            c.penalty.mkmmd.variance_reg = get_or(m, "variance_reg", 1e-8);
        }
        c.penalty.standardize_features = get_or(p, "standardize_features", false);
        c.kernel_reset_per_round = get_or(p, "kernel_reset_per_round", false);
    }

    if (j.contains("seeds")) {
        c.seeds = j.at("seeds").get<std::vector<uint64_t>>();
        if (c.seeds.empty()) throw ConfigError("seeds must be nonempty");
    }
    c.output = get_or<std::string>(j, "output", "");
    return c;
}

ExperimentConfig ExperimentConfig::from_string(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what());
    }
    return from_json(j);
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return from_string(text);
}

Json ExperimentConfig::to_json() const {
    Json d;
    if (dataset.kind == DatasetConfig::Kind::synthetic) {
        d = Json{{"kind", "synthetic"},
                 {"alpha", dataset.synth.alpha},
                 {"beta", dataset.synth.beta},
                 {"clients", dataset.synth.clients},
                 {"samples_per_client", dataset.synth.samples_per_client},
                 {"temperature", dataset.synth.temperature},
                 {"input_dim", dataset.synth.input_dim},
                 {"hidden_dim", dataset.synth.hidden_dim},
                 {"classes", dataset.synth.classes},
                 {"data_seed", dataset.synth.seed},
                 {"train_fraction", dataset.train_fraction}};
    } else {
        d = Json{{"kind", "shards"},
                 {"dir", dataset.shard_dir},
                 {"train_fraction", dataset.train_fraction}};
    }

    Json opt;
    if (optimizer.kind == TaskOptimizerConfig::Kind::sgd) {
        opt = Json{{"kind", "sgd"},
                   {"lr", optimizer.sgd.lr},
                   {"momentum", optimizer.sgd.momentum},
                   {"weight_decay", optimizer.sgd.weight_decay}};
    } else {
        opt = Json{{"kind", "adamw"},        {"lr", optimizer.adamw.lr},
                   {"beta1", optimizer.adamw.beta1}, {"beta2", optimizer.adamw.beta2},
                   {"eps", optimizer.adamw.eps},     {"weight_decay", optimizer.adamw.weight_decay}};
    }

    Json sched{{"kind", penalty.schedule.kind == ScheduleConfig::Kind::every_step
                            ? "every_step"
                            : "every_k_steps"},
               {"k", penalty.schedule.k},
               {"z_batches", penalty.schedule.z_batches}};

    return Json{
        {"name", name},
        {"method", method_name(method)},
        {"dataset", d},
        {"model",
         {{"hidden", model.hidden},
          {"activation", model.activation == Activation::relu ? "relu" : "identity"}}},
        {"fl",
         {{"rounds", rounds},
          {"local_epochs", local_epochs},
          {"local_steps", local_steps},
          {"batch_size", batch_size},
          {"optimizer", opt}}},
        {"penalty",
         {{"lambda", penalty.lambda},
          {"mu", penalty.mu},
          {"feature_kind", feature_kind_name(penalty.feature_kind)},
          {"fixed_r", penalty.fixed_r},
          {"depth", penalty.depth},
          {"schedule", sched},
          {"mmdd",
           {{"hidden", penalty.mmdd.hidden},
            {"depth", penalty.mmdd.depth},
            {"lr", penalty.mmdd.lr},
            {"steps_per_update", penalty.mmdd.steps_per_update},
            {"variance_reg", penalty.mmdd.variance_reg}}},
          {"mkmmd",
           {{"epsilon_shift", penalty.mkmmd.epsilon_shift},
            {"variance_reg", penalty.mkmmd.variance_reg}}},
          {"standardize_features", penalty.standardize_features},
          {"kernel_reset_per_round", kernel_reset_per_round}}},
        {"seeds", seeds},
        {"output", output}};
}

FlConfig ExperimentConfig::fl_config(uint64_t seed, int threads) const {
    FlConfig f;
    f.method = method;
    f.rounds = rounds;
    f.local_epochs = local_epochs;
    f.local_steps = local_steps;
    f.batch_size = batch_size;
    f.optimizer = optimizer;
    f.penalty = penalty;
    f.seed = seed;
    f.threads = threads;
    f.kernel_reset_per_round = kernel_reset_per_round;
    return f;
}

void json_set_path(Json& doc, const std::string& dotted, const std::string& value) {
    Json parsed;
    try {
        parsed = Json::parse(value);
    } catch (const Json::exception&) {
        parsed = value;  // plain string
    }
    Json* cur = &doc;
    size_t start = 0;
    for (;;) {
        size_t dot = dotted.find('.', start);
        std::string key = dotted.substr(start, dot == std::string::npos ? dot : dot - start);
        if (key.empty()) throw ConfigError("bad override path: " + dotted);
        if (dot == std::string::npos) {
            (*cur)[key] = parsed;
            return;
        }
        cur = &(*cur)[key];
        start = dot + 1;
    }
}

}  // namespace fedmmd
