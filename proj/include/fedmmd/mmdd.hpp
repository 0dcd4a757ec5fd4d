#pragma once

#include <optional>

#include "fedmmd/kernels.hpp"
#include "fedmmd/optim.hpp"

namespace fedmmd {

struct MmddConfig {
    int hidden = 50;
    int depth = 4;  // linear layers in the featurizer
    double lr = 1e-3;
    int steps_per_update = 5;
    double variance_reg = 1e-8;
};

struct RatioObjective {
    double j = 0.0;                  // MMD^2 / sqrt(regularized variance)
    double mmd2 = 0.0;
    double variance = 0.0;           // regularized
    std::vector<double> grads;       // layout of DeepKernelState::flatten()
};

// Studentized objective of the deep kernel on paired samples, with exact
// gradients for the featurizer weights, eps_raw, log_gamma_k and log_gamma_q
// through both the numerator and the denominator. `dq_full`, when given, must
// be the 2n x 2n squared-distance matrix of [x; y] (it is invariant across
// optimization steps on fixed samples).
RatioObjective ratio_objective(const DeepKernelState& state, const Matrix& x, const Matrix& y,
                               double variance_reg, const Matrix* dq_full = nullptr);

// Owns a deep kernel plus its AdamW state. Bandwidths are set lazily by the
// median heuristic on the first batch it is trained on.
class DeepKernelTrainer {
public:
    DeepKernelTrainer(const MmddConfig& cfg, int input_dim, Rng init_rng);

    bool initialized() const { return initialized_; }
    const DeepKernelState& state() const { return state_; }
    DeepKernelState& state() { return state_; }
    const MmddConfig& config() const { return cfg_; }
    double last_objective() const { return last_j_; }

    void ensure_initialized(const Matrix& x, const Matrix& y);

    // `steps` AdamW ascent steps on the ratio objective over fixed samples.
    // Returns the objective value after the final step's evaluation point.
    double train(const Matrix& x, const Matrix& y, int steps);

private:
    MmddConfig cfg_;
    DeepKernelState state_;
    Optimizer opt_;
    bool initialized_ = false;
    double last_j_ = 0.0;
};

}  // namespace fedmmd
