#include "fedmmd/flsim.hpp"

#include <atomic>
#include <mutex>
#include <chrono>
#include <cmath>
#include <thread>

#include "fedmmd/io.hpp"

namespace fedmmd {

namespace {

Optimizer make_task_optimizer(const TaskOptimizerConfig& cfg, size_t n) {
    if (cfg.kind == TaskOptimizerConfig::Kind::sgd) return Optimizer::sgd(cfg.sgd, n);
    return Optimizer::adamw(cfg.adamw, n);
}

// Shuffled epoch-order batch source; reshuffles when an epoch is exhausted.
class BatchCursor {
public:
    BatchCursor(const std::vector<int>& train_idx, int batch_size, Rng& rng)
        : idx_(train_idx), batch_(batch_size), rng_(rng) {
        reshuffle();
    }

    std::vector<int> next() {
        if (pos_ >= idx_.size()) reshuffle();
        size_t take = std::min(static_cast<size_t>(batch_), idx_.size() - pos_);
        std::vector<int> out(idx_.begin() + pos_, idx_.begin() + pos_ + take);
        pos_ += take;
        return out;
    }

    int batches_per_epoch() const {
        return static_cast<int>((idx_.size() + batch_ - 1) / batch_);
    }

private:
    void reshuffle() {
        rng_.shuffle(idx_);
        pos_ = 0;
    }
    std::vector<int> idx_;
    size_t pos_ = 0;
    int batch_;
    Rng& rng_;
};

}  // namespace

double accuracy(const MlpSpec& spec, const ModelWeights& w, const Matrix& x,
                const std::vector<int>& labels, const std::vector<int>& idx) {
    if (idx.empty()) throw ConfigError("accuracy: empty evaluation set");
    Matrix rows(idx.size(), x.cols());
    for (size_t i = 0; i < idx.size(); ++i) rows.row(i) = x.row(idx[i]);
    Matrix logits = mlp_forward(spec, w, rows);
    long hits = 0;
    for (size_t i = 0; i < idx.size(); ++i) {
        Eigen::Index arg;
        logits.row(i).maxCoeff(&arg);
        hits += (static_cast<int>(arg) == labels[idx[i]]);
    }
    return static_cast<double>(hits) / static_cast<double>(idx.size());
}

Federation::Federation(const MlpSpec& model, std::vector<ClientShard> data, const FlConfig& cfg)
    : spec_(model), cfg_(cfg) {
    if (data.empty()) throw ConfigError("Federation: no clients");
    if (!model.chained()) throw ShapeError("Federation: inconsistent layer dims");
    if (cfg.batch_size < 1) throw ConfigError("Federation: batch_size must be >= 1");
    if (cfg.penalty.feature_active() &&
        cfg.penalty.depth > static_cast<int>(model.attachments_deepest_first().size()))
        throw ConfigError("Federation: penalty depth exceeds attachment points");

    Rng init_rng = Rng::derive({cfg.seed, 0x111Dull});
    w_bar_ = ModelWeights(spec_);
    w_bar_.init_uniform_fan_in(init_rng);

    clients_.reserve(data.size());
    for (auto& shard : data) {
        if (shard.train_idx.empty())
            throw ConfigError("Federation: client " + std::to_string(shard.client_id) +
                              " has no training data");
        Client c{std::move(shard),
                 w_bar_,
                 w_bar_,
                 make_task_optimizer(cfg.optimizer, w_bar_.size()),
                 make_task_optimizer(cfg.optimizer, w_bar_.size()),
                 {},
                 {}};
        Rng krng = Rng::derive({cfg.seed, 0xFE12ull, static_cast<uint64_t>(c.data.client_id)});
        c.kernels = make_attachment_kernels(cfg.penalty, spec_, krng);
        c.last_metrics.id = c.data.client_id;
        n_total_ += static_cast<long>(c.data.train_idx.size());
        clients_.push_back(std::move(c));
    }
}

Matrix Federation::gather_rows(const Matrix& x, const std::vector<int>& idx) const {
    Matrix out(idx.size(), x.cols());
    for (size_t i = 0; i < idx.size(); ++i) out.row(i) = x.row(idx[i]);
    return out;
}

void Federation::update_kernels(Client& c, const ModelWeights& ref, const Matrix& batch_x) {
    if (batch_x.rows() < 4) return;  // estimators need at least 4 paired samples
    ++c.last_metrics.kernel_updates;
    std::vector<Matrix> latents_local, latents_ref;
    mlp_forward(spec_, c.w_local, batch_x, nullptr, &latents_local);
    mlp_forward(spec_, ref, batch_x, nullptr, &latents_ref);
    auto attach = spec_.attachments_deepest_first();
    for (int i = 0; i < cfg_.penalty.depth && i < static_cast<int>(c.kernels.size()); ++i) {
        Matrix fl = latents_local[attach[i]];
        Matrix fg = latents_ref[attach[i]];
        if (cfg_.penalty.standardize_features) standardize_pair(fl, fg);
        if (cfg_.penalty.feature_kind == FeatureKind::mkmmd) {
            BankUpdate up = update_bank(c.kernels[i].bank, fl, fg, cfg_.penalty.mkmmd);
            c.kernels[i].bank = std::move(up.bank);
            if (i == 0) {
                c.last_metrics.kernel_beta.assign(c.kernels[i].bank.beta.data(),
                                                  c.kernels[i].bank.beta.data() +
                                                      c.kernels[i].bank.beta.size());
                c.last_metrics.kernel_objective = up.ratio;
            }
        } else if (cfg_.penalty.feature_kind == FeatureKind::mmdd) {
            double j = c.kernels[i].deep->train(fl, fg, cfg_.penalty.mmdd.steps_per_update);
            if (i == 0) c.last_metrics.kernel_objective = j;
        }
    }
}

ClientUpload Federation::run_client_round(Client& c, const ServerBroadcast& bc) {
    Rng rng = Rng::derive({cfg_.seed, 0xC11E57ull, static_cast<uint64_t>(c.data.client_id),
                           static_cast<uint64_t>(bc.round)});

    if (cfg_.kernel_reset_per_round && cfg_.penalty.uses_kernel_updates()) {
        Rng krng = Rng::derive({cfg_.seed, 0xFE12ull, static_cast<uint64_t>(c.data.client_id),
                                static_cast<uint64_t>(bc.round)});
        c.kernels = make_attachment_kernels(cfg_.penalty, spec_, krng);
    }

    c.last_metrics.kernel_updates = 0;
    const ModelWeights& ref = bc.w_bar;
    const bool is_ditto = cfg_.method == Method::ditto;
    const bool is_fedavg = cfg_.method == Method::fedavg;

    // FedAvg and Ditto resume from the broadcast model; MR-MTL keeps its
    // local model and only references the average.
    if (is_ditto)
        c.w_global = ref;
    else if (is_fedavg)
        c.w_local = ref;

    BatchCursor cursor(c.data.train_idx, cfg_.batch_size, rng);
    const int steps = cfg_.local_steps >= 0 ? cfg_.local_steps
                                            : cfg_.local_epochs * cursor.batches_per_epoch();

    const auto& pen = cfg_.penalty;
    const bool periodic = pen.feature_active() && pen.uses_kernel_updates() &&
                          pen.schedule.kind == ScheduleConfig::Kind::every_k_steps;
    const bool per_step = pen.feature_active() && pen.uses_kernel_updates() &&
                          pen.schedule.kind == ScheduleConfig::Kind::every_step;

    double loss_sum = 0.0, wpen_sum = 0.0, fpen_sum = 0.0;
    std::vector<Matrix> latents_local, latents_ref;

    for (int step = 0; step < steps; ++step) {
        if (periodic && step % pen.schedule.k == 0) {
            // z batches of sampled training data, pooled; sampled without
            // replacement when the shard allows it.
            const size_t want = static_cast<size_t>(pen.schedule.z_batches) * cfg_.batch_size;
            std::vector<int> pool;
            if (want <= c.data.train_idx.size()) {
                pool = c.data.train_idx;
                for (size_t i = 0; i < want; ++i) {
                    size_t j = i + rng.next_u64() % (pool.size() - i);
                    std::swap(pool[i], pool[j]);
                }
                pool.resize(want);
            } else {
                pool.reserve(want);
                for (size_t i = 0; i < want; ++i)
                    pool.push_back(c.data.train_idx[rng.uniform_int(
                        static_cast<int>(c.data.train_idx.size()))]);
            }
            update_kernels(c, ref, gather_rows(c.data.features, pool));
        }

        std::vector<int> bidx = cursor.next();
        Matrix bx = gather_rows(c.data.features, bidx);
        std::vector<int> by(bidx.size());
        for (size_t i = 0; i < bidx.size(); ++i) by[i] = c.data.labels[bidx[i]];

        if (is_fedavg) {
            auto [loss, grads] = loss_and_grad(spec_, c.w_local, bx, by);
            c.opt_local.step(c.w_local.flat(), grads.flat());
            loss_sum += loss;
            continue;
        }

        if (is_ditto) {
            auto [gloss, ggrads] = loss_and_grad(spec_, c.w_global, bx, by);
            c.opt_global.step(c.w_global.flat(), ggrads.flat());
        }

        // Personalized model step on the composed objective (Eq. augmented
        // loss): task CE + (lambda/2)|w - wbar|^2 + mu * feature drift, with
        // the reference frozen at the round-start broadcast.
        ForwardCache cache;
        Matrix logits = mlp_forward(spec_, c.w_local, bx, &cache, &latents_local);
        Matrix dlogits;
        double task_loss = cross_entropy(logits, by, &dlogits);

        double wpen_value = 0.0;
        double fpen_value = 0.0;
        std::vector<std::pair<int, Matrix>> dlatents;
        if (pen.feature_active() && bx.rows() >= 2) {
            mlp_forward(spec_, ref, bx, nullptr, &latents_ref);
            FeatureDriftTerms terms =
                feature_drift_terms(pen, spec_, latents_local, latents_ref, c.kernels);
            fpen_value = terms.value;
            for (auto& [li, dl] : terms.dlatents)
                dlatents.emplace_back(li, Matrix(pen.mu * dl));
        }
        ModelWeights grads = mlp_backward(spec_, c.w_local, cache, dlogits, dlatents);
        if (pen.lambda != 0.0) {
            auto d = c.w_local.as_vector() - ref.as_vector();
            wpen_value = d.squaredNorm();
            grads.as_vector() += pen.lambda * d;
        }
        c.opt_local.step(c.w_local.flat(), grads.flat());

        loss_sum += task_loss;
        wpen_sum += wpen_value;
        fpen_sum += fpen_value;

        if (per_step) update_kernels(c, ref, bx);
    }

    const double steps_div = std::max(steps, 1);
    c.last_metrics.train_loss = loss_sum / steps_div;
    c.last_metrics.weight_penalty = wpen_sum / steps_div;
    c.last_metrics.feature_penalty = fpen_sum / steps_div;

    ClientUpload up;
    up.weights = is_ditto ? c.w_global : c.w_local;
    up.n_examples = static_cast<long>(c.data.train_idx.size());
    return up;
}

RoundReport Federation::run_round() {
    auto t0 = std::chrono::steady_clock::now();
    ServerBroadcast bc{w_bar_, round_};

    const int n = num_clients();
    std::vector<ClientUpload> uploads(n);
    const int workers = std::clamp(cfg_.threads, 1, n);
    if (workers == 1) {
        for (int i = 0; i < n; ++i) uploads[i] = run_client_round(clients_[i], bc);
    } else {
        std::atomic<int> next{0};
        std::exception_ptr err;
        std::mutex err_mu;
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (;;) {
                    int i = next.fetch_add(1);
                    if (i >= n) return;
                    try {
                        uploads[i] = run_client_round(clients_[i], bc);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(err_mu);
                        if (!err) err = std::current_exception();
                        return;
                    }
                }
            });
        for (auto& t : pool) t.join();
        if (err) std::rethrow_exception(err);
    }

    // FedAvg aggregation in client order: w_bar = sum n_i/n * w_i.
    Vector acc = Vector::Zero(static_cast<Eigen::Index>(w_bar_.size()));
    long total = 0;
    for (const auto& up : uploads) total += up.n_examples;
    for (const auto& up : uploads)
        acc += (static_cast<double>(up.n_examples) / static_cast<double>(total)) *
               up.weights.as_vector();
    w_bar_.as_vector() = acc;
    ++round_;

    RoundReport report;
    report.round = round_ - 1;
    double acc_sum = 0.0;
    for (int i = 0; i < n; ++i) {
        Client& c = clients_[i];
        c.last_metrics.test_accuracy = client_accuracy(i);
        report.clients.push_back(c.last_metrics);
        acc_sum += c.last_metrics.test_accuracy;
    }
    report.mean_test_accuracy = acc_sum / n;
    report.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

std::vector<RoundReport> Federation::run() {
    std::vector<RoundReport> out;
    for (int t = round_; t < cfg_.rounds; ++t) out.push_back(run_round());
    return out;
}

const ModelWeights& Federation::client_global_model(int i) const {
    return clients_.at(i).w_global;
}

long Federation::client_train_count(int i) const {
    return static_cast<long>(clients_.at(i).data.train_idx.size());
}

const ModelWeights& Federation::client_model(int i) const {
    const Client& c = clients_.at(i);
    return cfg_.method == Method::fedavg ? w_bar_ : c.w_local;
}

double Federation::client_accuracy(int i) const {
    const Client& c = clients_.at(i);
    return evaluate_accuracy(client_model(i), c.data);
}

double Federation::evaluate_accuracy(const ModelWeights& w, const ClientShard& shard) const {
    return accuracy(spec_, w, shard.features, shard.labels, shard.test_idx);
}

double Federation::uniform_average_accuracy() const {
    double s = 0.0;
    for (int i = 0; i < num_clients(); ++i) s += client_accuracy(i);
    return s / num_clients();
}

void Federation::checkpoint(const std::string& dir) const {
    if (cfg_.method == Method::fedavg) {
        save_checkpoint(dir + "/global.ckpt", w_bar_);
        return;
    }
    for (const auto& c : clients_)
        save_checkpoint(dir + "/client_" + std::to_string(c.data.client_id) + ".ckpt", c.w_local);
}

}  // namespace fedmmd
