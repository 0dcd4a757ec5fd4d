#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedmmd/datagen.hpp"
#include "fedmmd/optim.hpp"
#include "fedmmd/penalties.hpp"

namespace fedmmd {

enum class Method { fedavg, ditto, mrmtl };

struct TaskOptimizerConfig {
    enum class Kind { sgd, adamw };
    Kind kind = Kind::sgd;
    SgdConfig sgd{0.01, 0.9, 0.001};
    AdamWConfig adamw;
};

struct FlConfig {
    Method method = Method::ditto;
    int rounds = 15;
    int local_epochs = 5;
    int local_steps = -1;  // >= 0 overrides epoch-driven rounds
    int batch_size = 10;
    TaskOptimizerConfig optimizer;
    PenaltyConfig penalty;
    uint64_t seed = 2021;
    int threads = 1;
    bool kernel_reset_per_round = false;
};

// The only message types crossing the client/server boundary.
struct ServerBroadcast {
    ModelWeights w_bar;
    int round = 0;
};

struct ClientUpload {
    ModelWeights weights;
    long n_examples = 0;
};

struct ClientRoundMetrics {
    int id = 0;
    double train_loss = 0.0;
    double test_accuracy = 0.0;
    double weight_penalty = 0.0;
    double feature_penalty = 0.0;
    std::vector<double> kernel_beta;  // deepest attachment, mkmmd variants
    double kernel_objective = 0.0;    // last MMD-D ratio (mmdd) or QP ratio (mkmmd)
    int kernel_updates = 0;           // measure re-optimizations this round
};

struct RoundReport {
    int round = 0;
    std::vector<ClientRoundMetrics> clients;
    double mean_test_accuracy = 0.0;  // uniform average across clients
    double wall_ms = 0.0;
};

// In-process federation. One instance owns the server state and all client
// states; rounds execute clients independently (optionally on a small thread
// pool) and aggregate with data-size weights. Per-client randomness is drawn
// from streams keyed by (seed, client, round) so results do not depend on
// scheduling.
class Federation {
public:
    Federation(const MlpSpec& model, std::vector<ClientShard> data, const FlConfig& cfg);

    RoundReport run_round();
    std::vector<RoundReport> run();  // all configured rounds

    int round() const { return round_; }
    int num_clients() const { return static_cast<int>(clients_.size()); }
    const ModelWeights& global_model() const { return w_bar_; }
    // Model of record per client: local model for pFL methods, the aggregated
    // global model for FedAvg.
    const ModelWeights& client_model(int i) const;
    // Ditto's per-client global model (the aggregation input); test hook.
    const ModelWeights& client_global_model(int i) const;
    long client_train_count(int i) const;
    const MlpSpec& model_spec() const { return spec_; }

    double client_accuracy(int i) const;        // on the client's own test set
    double uniform_average_accuracy() const;    // unweighted mean across clients

    // Writes final checkpoints: client_<id>.ckpt for pFL methods, global.ckpt
    // for FedAvg.
    void checkpoint(const std::string& dir) const;

private:
    struct Client {
        ClientShard data;
        ModelWeights w_local;             // pFL model (ditto, mrmtl)
        ModelWeights w_global;            // ditto's per-client global model
        Optimizer opt_local;
        Optimizer opt_global;
        std::vector<AttachmentKernels> kernels;
        ClientRoundMetrics last_metrics;
    };

    ClientUpload run_client_round(Client& c, const ServerBroadcast& bc);
    void update_kernels(Client& c, const ModelWeights& ref, const Matrix& batch_x);
    Matrix gather_rows(const Matrix& x, const std::vector<int>& idx) const;
    double evaluate_accuracy(const ModelWeights& w, const ClientShard& shard) const;

    MlpSpec spec_;
    FlConfig cfg_;
    std::vector<Client> clients_;
    ModelWeights w_bar_;
    long n_total_ = 0;
    int round_ = 0;
};

// Accuracy of argmax(logits) against labels over the given rows.
double accuracy(const MlpSpec& spec, const ModelWeights& w, const Matrix& x,
                const std::vector<int>& labels, const std::vector<int>& idx);

}  // namespace fedmmd
