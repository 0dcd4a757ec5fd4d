#include <doctest.h>

#include <cmath>
#include <json.hpp>

#include "fedmmd/flsim.hpp"

using namespace fedmmd;
using Json = nlohmann::json;

namespace {

std::vector<ClientShard> tiny_dataset(int clients, int samples, uint64_t seed = 7,
                                      double alpha = 0.5, double beta = 0.5) {
    SynthConfig cfg;
    cfg.alpha = alpha;
    cfg.beta = beta;
    cfg.clients = clients;
    cfg.samples_per_client = samples;
    cfg.seed = seed;
    auto shards = generate_synthetic(cfg);
    for (auto& s : shards) train_test_split(s, 0.8, seed);
    return shards;
}

FlConfig base_config(Method m, uint64_t seed = 2021) {
    FlConfig cfg;
    cfg.method = m;
    cfg.rounds = 2;
    cfg.local_epochs = 1;
    cfg.batch_size = 10;
    cfg.optimizer.sgd = {0.01, 0.9, 0.001};
    cfg.seed = seed;
    return cfg;
}

MlpSpec task_spec() { return MlpSpec::task_net(60, 20, 10); }

Json report_key(const RoundReport& r) {
    // wall time excluded: the one legitimately nondeterministic field
    Json clients = Json::array();
    for (const auto& c : r.clients)
        clients.push_back(Json{{"id", c.id},
                               {"train_loss", c.train_loss},
                               {"test_accuracy", c.test_accuracy},
                               {"weight_penalty", c.weight_penalty},
                               {"feature_penalty", c.feature_penalty},
                               {"kernel_beta", c.kernel_beta},
                               {"kernel_objective", c.kernel_objective},
                               {"kernel_updates", c.kernel_updates}});
    return Json{{"round", r.round}, {"mean", r.mean_test_accuracy}, {"clients", clients}};
}

}  // namespace

TEST_CASE("ditto: single client aggregation is that client's global model") {
    auto data = tiny_dataset(1, 120);
    Federation fed(task_spec(), data, base_config(Method::ditto));
    fed.run_round();
    Vector wbar = fed.global_model().as_vector();
    Vector wg = fed.client_global_model(0).as_vector();
    CHECK((wbar - wg).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("ditto: with lambda = mu = 0 local and global trajectories coincide") {
    auto data = tiny_dataset(2, 100);
    FlConfig cfg = base_config(Method::ditto);
    cfg.penalty.lambda = 0.0;
    cfg.penalty.mu = 0.0;
    Federation fed(task_spec(), data, cfg);
    fed.run_round();
    for (int i = 0; i < fed.num_clients(); ++i) {
        Vector wl = fed.client_model(i).as_vector();
        Vector wg = fed.client_global_model(i).as_vector();
        CHECK((wl - wg).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("ditto: the weight penalty pulls the local model toward the reference") {
    auto data = tiny_dataset(2, 100);

    // One step from w_L = w_bar: the penalty gradient vanishes there, so even
    // a huge lambda yields drift no larger than the unpenalized step.
    {
        FlConfig free_cfg = base_config(Method::ditto);
        free_cfg.local_steps = 1;
        FlConfig pinned_cfg = free_cfg;
        pinned_cfg.penalty.lambda = 1e6;
        Federation free_fed(task_spec(), data, free_cfg);
        Federation pinned_fed(task_spec(), data, pinned_cfg);
        Vector ref = free_fed.global_model().as_vector();
        free_fed.run_round();
        pinned_fed.run_round();
        double drift_free = (free_fed.client_model(0).as_vector() - ref).norm();
        double drift_pinned = (pinned_fed.client_model(0).as_vector() - ref).norm();
        CHECK(drift_pinned <= drift_free);
    }

    // Across a full round, a stable lambda strictly shrinks the drift.
    {
        FlConfig free_cfg = base_config(Method::ditto);
        FlConfig pinned_cfg = base_config(Method::ditto);
        pinned_cfg.penalty.lambda = 10.0;
        Federation free_fed(task_spec(), data, free_cfg);
        Federation pinned_fed(task_spec(), data, pinned_cfg);
        Vector ref = free_fed.global_model().as_vector();
        free_fed.run_round();
        pinned_fed.run_round();
        double drift_free = (free_fed.client_model(0).as_vector() - ref).norm();
        double drift_pinned = (pinned_fed.client_model(0).as_vector() - ref).norm();
        CHECK(drift_pinned < drift_free);
    }
}

TEST_CASE("ditto: aggregation matches the weighted-mean formula exactly") {
    auto data = tiny_dataset(2, 100);
    data[1].train_idx.resize(data[0].train_idx.size() / 3);  // about 3:1 weights
    Federation fed(task_spec(), data, base_config(Method::ditto));
    fed.run_round();
    long n0 = fed.client_train_count(0), n1 = fed.client_train_count(1);
    Vector expect =
        (static_cast<double>(n0) / (n0 + n1)) * fed.client_global_model(0).as_vector() +
        (static_cast<double>(n1) / (n0 + n1)) * fed.client_global_model(1).as_vector();
    CHECK((fed.global_model().as_vector() - expect).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("ditto: local models never reach the aggregate (lambda-only change)") {
    // Two runs differing only in lambda: local trajectories differ, but the
    // aggregated sequence must match exactly because only per-client global
    // models are uploaded.
    auto data = tiny_dataset(2, 100);
    FlConfig a = base_config(Method::ditto);
    a.penalty.lambda = 0.0;
    FlConfig b = base_config(Method::ditto);
    b.penalty.lambda = 100.0;
    Federation fa(task_spec(), data, a);
    Federation fb(task_spec(), data, b);
    for (int t = 0; t < 2; ++t) {
        fa.run_round();
        fb.run_round();
        CHECK((fa.global_model().as_vector() - fb.global_model().as_vector())
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
    }
    CHECK((fa.client_model(0).as_vector() - fb.client_model(0).as_vector())
              .cwiseAbs()
              .maxCoeff() > 0.0);
}

TEST_CASE("mrmtl: aggregation averages local models without overwriting them") {
    auto data = tiny_dataset(2, 100);
    Federation fed(task_spec(), data, base_config(Method::mrmtl));
    fed.run_round();
    Vector mean = 0.5 * (fed.client_model(0).as_vector() + fed.client_model(1).as_vector());
    CHECK((fed.global_model().as_vector() - mean).cwiseAbs().maxCoeff() <= 1e-12);
    // locals keep their own trained state rather than the average
    CHECK((fed.client_model(0).as_vector() - fed.global_model().as_vector())
              .cwiseAbs()
              .maxCoeff() > 0.0);
}

TEST_CASE("mrmtl: single client references its own previous round") {
    auto data = tiny_dataset(1, 100);
    FlConfig cfg = base_config(Method::mrmtl);
    cfg.penalty.lambda = 0.01;
    Federation fed(task_spec(), data, cfg);
    fed.run_round();
    CHECK((fed.global_model().as_vector() - fed.client_model(0).as_vector())
              .cwiseAbs()
              .maxCoeff() == 0.0);
    fed.run_round();  // second round penalizes drift from the round-1 model
}

TEST_CASE("fedavg: zero local steps leave the aggregate unchanged") {
    auto data = tiny_dataset(2, 100);
    FlConfig cfg = base_config(Method::fedavg);
    cfg.local_steps = 0;
    Federation fed(task_spec(), data, cfg);
    Vector before = fed.global_model().as_vector();
    fed.run_round();
    CHECK((fed.global_model().as_vector() - before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("schedule: every 20 steps yields exactly 5 updates over 100 steps") {
    auto data = tiny_dataset(1, 120);
    FlConfig cfg = base_config(Method::ditto);
    cfg.local_steps = 100;
    cfg.penalty.mu = 0.1;
    cfg.penalty.feature_kind = FeatureKind::mkmmd;
    cfg.penalty.schedule.kind = ScheduleConfig::Kind::every_k_steps;
    cfg.penalty.schedule.k = 20;
    cfg.penalty.schedule.z_batches = 4;
    Federation fed(task_spec(), data, cfg);
    RoundReport r = fed.run_round();
    CHECK(r.clients[0].kernel_updates == 5);
}

TEST_CASE("schedule: every_step updates once per step") {
    auto data = tiny_dataset(1, 120);
    FlConfig cfg = base_config(Method::ditto);
    cfg.local_steps = 7;
    cfg.penalty.mu = 0.1;
    cfg.penalty.feature_kind = FeatureKind::mkmmd;
    cfg.penalty.schedule.kind = ScheduleConfig::Kind::every_step;
    Federation fed(task_spec(), data, cfg);
    RoundReport r = fed.run_round();
    CHECK(r.clients[0].kernel_updates == 7);
}

TEST_CASE("schedule: cosine penalty never triggers kernel updates") {
    auto data = tiny_dataset(1, 120);
    FlConfig cfg = base_config(Method::ditto);
    cfg.local_steps = 40;
    cfg.penalty.mu = 0.1;
    cfg.penalty.feature_kind = FeatureKind::cosine;
    Federation fed(task_spec(), data, cfg);
    RoundReport r = fed.run_round();
    CHECK(r.clients[0].kernel_updates == 0);
}

TEST_CASE("evaluation: handcrafted perfect classifier scores 1.0") {
    // Labels equal argmax over the first 10 features; an identity-activation
    // network wired to copy those features classifies perfectly.
    ClientShard s;
    s.client_id = 0;
    Rng rng(91);
    s.features = Matrix(80, 12);
    for (int i = 0; i < 80; ++i)
        for (int j = 0; j < 12; ++j) s.features(i, j) = rng.normal();
    for (int i = 0; i < 80; ++i) {
        Eigen::Index arg;
        s.features.row(i).head(10).maxCoeff(&arg);
        s.labels.push_back(static_cast<int>(arg));
    }
    train_test_split(s, 0.5, 1);

    MlpSpec spec = MlpSpec::task_net(12, 10, 10, Activation::identity);
    ModelWeights w(spec);
    w.tensor(0).block(0, 0, 10, 10).setIdentity();
    w.tensor(2).setIdentity();
    CHECK(accuracy(spec, w, s.features, s.labels, s.test_idx) == 1.0);
}

TEST_CASE("evaluation: uniform average is the unweighted client mean") {
    auto data = tiny_dataset(3, 100);
    data[2].train_idx.resize(20);  // unequal sizes must not reweight the metric
    Federation fed(task_spec(), data, base_config(Method::ditto));
    fed.run_round();
    double mean = (fed.client_accuracy(0) + fed.client_accuracy(1) + fed.client_accuracy(2)) / 3.0;
    CHECK(fed.uniform_average_accuracy() == doctest::Approx(mean).epsilon(1e-15));
}

TEST_CASE("evaluation: empty test set is a config error") {
    auto data = tiny_dataset(1, 50);
    data[0].test_idx.clear();
    Federation fed(task_spec(), data, base_config(Method::ditto));
    CHECK_THROWS_AS(fed.run_round(), ConfigError);
}

TEST_CASE("determinism: same seed and config reproduce reports bitwise") {
    auto run = [](int threads) {
        auto data = tiny_dataset(4, 80);
        FlConfig cfg = base_config(Method::ditto);
        cfg.threads = threads;
        cfg.penalty.lambda = 0.1;
        cfg.penalty.mu = 0.1;
        cfg.penalty.feature_kind = FeatureKind::mkmmd;
        cfg.penalty.schedule.kind = ScheduleConfig::Kind::every_k_steps;
        cfg.penalty.schedule.k = 5;
        cfg.penalty.schedule.z_batches = 3;
        Federation fed(MlpSpec::task_net(60, 20, 10), data, cfg);
        Json out = Json::array();
        for (int t = 0; t < 2; ++t) out.push_back(report_key(fed.run_round()));
        return out.dump();
    };
    std::string a = run(1);
    CHECK(a == run(1));
    CHECK(a == run(2));  // schedule independence
    CHECK(a == run(4));
}

TEST_CASE("determinism: mmdd path is schedule independent too") {
    auto run = [](int threads) {
        auto data = tiny_dataset(2, 60);
        FlConfig cfg = base_config(Method::ditto);
        cfg.threads = threads;
        cfg.local_steps = 12;
        cfg.penalty.mu = 1.0;
        cfg.penalty.feature_kind = FeatureKind::mmdd;
        cfg.penalty.schedule.kind = ScheduleConfig::Kind::every_k_steps;
        cfg.penalty.schedule.k = 6;
        cfg.penalty.schedule.z_batches = 2;
        cfg.penalty.mmdd.hidden = 8;
        cfg.penalty.mmdd.depth = 2;
        Federation fed(MlpSpec::task_net(60, 20, 10), data, cfg);
        Json out = Json::array();
        for (int t = 0; t < 2; ++t) out.push_back(report_key(fed.run_round()));
        return out.dump();
    };
    std::string a = run(1);
    CHECK(a == run(2));
}
