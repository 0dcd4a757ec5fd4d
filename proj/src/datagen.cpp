#include "fedmmd/datagen.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace fedmmd {

std::vector<ClientShard> generate_synthetic(const SynthConfig& cfg) {
    if (cfg.clients < 1 || cfg.samples_per_client < 1)
        throw DomainError("generate_synthetic: need clients >= 1 and samples >= 1");
    if (cfg.alpha < 0.0 || cfg.beta < 0.0)
        throw DomainError("generate_synthetic: alpha and beta must be nonnegative");
    if (!(cfg.temperature > 0.0)) throw DomainError("generate_synthetic: temperature > 0");

    const int in = cfg.input_dim, hid = cfg.hidden_dim, cls = cfg.classes;
    Vector dim_std(in);
    for (int j = 0; j < in; ++j) dim_std(j) = std::pow(static_cast<double>(j + 1), -0.6);  // sqrt(j^-1.2)

    std::vector<ClientShard> shards;
    shards.reserve(cfg.clients);
    for (int k = 0; k < cfg.clients; ++k) {
        Rng rng = Rng::derive({cfg.seed, 0xDA7Aull, static_cast<uint64_t>(k)});
        const double u1 = rng.normal(0.0, cfg.alpha);
        const double u2 = rng.normal(0.0, cfg.alpha);

        Matrix w1(in, hid), w2(hid, cls);
        Vector b1(hid), b2(cls);
        for (int r = 0; r < hid; ++r)
            for (int c = 0; c < in; ++c) w1(c, r) = rng.normal(u1, 1.0);
        for (int r = 0; r < hid; ++r) b1(r) = rng.normal(u1, 1.0);
        for (int r = 0; r < cls; ++r)
            for (int c = 0; c < hid; ++c) w2(c, r) = rng.normal(u2, 1.0);
        for (int r = 0; r < cls; ++r) b2(r) = rng.normal(u2, 1.0);

        const double bk = rng.normal(0.0, cfg.beta);
        Vector v(in);
        for (int j = 0; j < in; ++j) v(j) = rng.normal(bk, 1.0);

        ClientShard shard;
        shard.client_id = k;
        shard.features.resize(cfg.samples_per_client, in);
        shard.labels.resize(cfg.samples_per_client);
        for (int s = 0; s < cfg.samples_per_client; ++s) {
            for (int j = 0; j < in; ++j)
                shard.features(s, j) = rng.normal(v(j), dim_std(j));
            Eigen::RowVectorXd h =
                (shard.features.row(s) * w1 + b1.transpose()) / cfg.temperature;
            Eigen::RowVectorXd logits = h * w2 + b2.transpose();
            Eigen::Index arg;
            logits.maxCoeff(&arg);
            shard.labels[s] = static_cast<int>(arg);
        }
        shards.push_back(std::move(shard));
    }
    return shards;
}

std::vector<std::vector<int>> dirichlet_partition(const std::vector<int>& labels,
                                                  const DirichletConfig& cfg) {
    if (labels.empty()) throw DomainError("dirichlet_partition: empty label set");
    if (!(cfg.concentration > 0.0))
        throw DomainError("dirichlet_partition: concentration must be positive");
    if (cfg.clients < 1) throw DomainError("dirichlet_partition: need clients >= 1");

    std::map<int, std::vector<int>> by_class;
    for (size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(static_cast<int>(i));

    Rng rng = Rng::derive({cfg.seed, 0xD112ull});
    const int n_clients = cfg.clients;
    for (int attempt = 0; attempt < 100; ++attempt) {
        std::vector<std::vector<int>> assignment(n_clients);
        for (auto& [cls, idx_const] : by_class) {
            std::vector<int> idx = idx_const;
            rng.shuffle(idx);
            std::vector<double> p = rng.dirichlet(cfg.concentration, n_clients);
            // Cumulative-rounding cut keeps the split exhaustive and disjoint.
            const double nc = static_cast<double>(idx.size());
            double cum = 0.0;
            size_t prev = 0;
            for (int c = 0; c < n_clients; ++c) {
                cum += p[c];
                size_t upto = (c == n_clients - 1)
                                  ? idx.size()
                                  : std::min(idx.size(), static_cast<size_t>(std::llround(cum * nc)));
                for (size_t i = prev; i < upto; ++i) assignment[c].push_back(idx[i]);
                prev = std::max(prev, upto);
            }
        }
        bool ok = true;
        for (const auto& a : assignment)
            if (a.empty()) ok = false;
        if (ok) {
            for (auto& a : assignment) std::sort(a.begin(), a.end());
            return assignment;
        }
    }
    throw DomainError("dirichlet_partition: could not produce nonempty clients in 100 draws");
}

void train_test_split(ClientShard& shard, double train_fraction, uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw DomainError("train_test_split: fraction must be in (0, 1)");
    const int n = static_cast<int>(shard.labels.size());
    if (n < 2) throw DomainError("train_test_split: need at least 2 samples");

    std::map<int, std::vector<int>> by_class;
    for (int i = 0; i < n; ++i) by_class[shard.labels[i]].push_back(i);

    Rng rng = Rng::derive({seed, 0x5B117ull, static_cast<uint64_t>(shard.client_id)});
    const long target_train = std::lround(train_fraction * n);

    // Largest-remainder allocation of the train budget across classes keeps
    // the total exact and each class within one sample of proportional.
    struct ClassQuota {
        int cls;
        int count;
        int quota;
        double frac;
    };
    std::vector<ClassQuota> quotas;
    long floored = 0;
    for (auto& [cls, idx] : by_class) {
        double exact = train_fraction * static_cast<double>(idx.size());
        int q = static_cast<int>(exact);
        quotas.push_back({cls, static_cast<int>(idx.size()), q, exact - q});
        floored += q;
    }
    long remaining = target_train - floored;
    std::stable_sort(quotas.begin(), quotas.end(),
                     [](const ClassQuota& a, const ClassQuota& b) { return a.frac > b.frac; });
    for (auto& q : quotas) {
        if (remaining <= 0) break;
        if (q.quota < q.count) {
            ++q.quota;
            --remaining;
        }
    }
    for (auto& q : quotas) {
        // Singleton classes fall back to train; otherwise keep at least one
        // sample on each side where possible.
        if (q.count == 1)
            q.quota = 1;
        else
            q.quota = std::clamp(q.quota, 1, q.count - 1);
    }

    shard.train_idx.clear();
    shard.test_idx.clear();
    for (const auto& q : quotas) {
        std::vector<int> idx = by_class[q.cls];
        rng.shuffle(idx);
        for (int i = 0; i < q.count; ++i)
            (i < q.quota ? shard.train_idx : shard.test_idx).push_back(idx[i]);
    }
    std::sort(shard.train_idx.begin(), shard.train_idx.end());
    std::sort(shard.test_idx.begin(), shard.test_idx.end());
    if (shard.test_idx.empty())
        throw DomainError("train_test_split: split produced an empty test set");
}

}  // namespace fedmmd
