#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "fedmmd/matrix.hpp"
#include "fedmmd/mlp.hpp"

namespace fedmmd {

// k(x, y) = exp(-gamma * |x - y|^2)
struct RbfKernel {
    double gamma = 1.0;
};

// Linear combination sum_j beta_j k_j of RBF kernels. The default ladder is
// 18 bandwidths 2^e with e = -3.5, -3.25, ..., 0.75.
struct KernelBank {
    std::vector<RbfKernel> kernels;
    Vector beta;

    static constexpr int kDefaultSize = 18;

    static KernelBank default_bank(int d = kDefaultSize);
    // First r kernels of the default ladder, each weighted 1/r.
    static KernelBank fixed_uniform(int r);

    int size() const { return static_cast<int>(kernels.size()); }
    void validate() const;
};

Matrix gram(const RbfKernel& k, const Matrix& x, const Matrix& y);

struct GramBlocks {
    Matrix kxx, kyy, kxy;
};

GramBlocks gram_blocks(const RbfKernel& k, const Matrix& x, const Matrix& y);

// Unbiased U-statistic from Gram blocks: off-diagonal means of k(X,X) and
// k(Y,Y) minus twice the off-diagonal mean of k(X,Y). Requires n >= 2 paired
// samples; the estimate may be negative.
double mmd2_unbiased_from_grams(const Matrix& kxx, const Matrix& kyy, const Matrix& kxy);

double mmd2_unbiased(const RbfKernel& k, const Matrix& x, const Matrix& y);

// First-order variance of the MMD^2 U-statistic: with
// H = Kxx + Kyy - Kxy - Kxy^T and per-sample row means hbar_i,
// sigma^2 = 4 * (mean_i hbar_i^2 - (mean_ij H_ij)^2).
// Returns max(sigma^2, 0) + regularizer, so the output is strictly positive
// for regularizer > 0. Requires n >= 4.
double mmd_variance_from_grams(const Matrix& kxx, const Matrix& kyy, const Matrix& kxy,
                               double regularizer);

double mmd_variance(const RbfKernel& k, const Matrix& x, const Matrix& y, double regularizer);

struct BankMmd {
    Vector m_hat;     // per-kernel MMD^2 estimates
    double combined;  // beta . m_hat
};

BankMmd mmd2_bank(const KernelBank& bank, const Matrix& x, const Matrix& y);

// Per-kernel regularized variance estimates (inputs to the fallback rule).
Vector bank_variances(const KernelBank& bank, const Matrix& x, const Matrix& y,
                      double regularizer);

// Empirical covariance between the kernels' h-statistics over paired
// quadruples (x_{2i}, x_{2i+1}, y_{2i}, y_{2i+1}); a trailing odd sample is
// dropped. Sample covariance (divisor nq - 1). Requires n >= 4.
Matrix covariance_qk(const KernelBank& bank, const Matrix& x, const Matrix& y);

// Mean over paired rows of (1 - cos(fl_i, fg_i)); rows where either side is
// the zero vector contribute 1 (their similarity is defined as 0).
double cosine_penalty(const Matrix& f_local, const Matrix& f_global);

struct ValueGradX {
    double value = 0.0;
    Matrix dx;  // gradient with respect to the local-side rows
};

ValueGradX cosine_penalty_grad(const Matrix& f_local, const Matrix& f_global);

// d/dX of the bank-weighted unbiased MMD^2, treating Y as constant.
ValueGradX bank_mmd2_grad_x(const KernelBank& bank, const Matrix& x, const Matrix& y);

// Deep kernel k_w(x, y) = (1 - eps) * exp(-gamma_k |phi(x) - phi(y)|^2)
//                         + eps * exp(-gamma_q |x - y|^2).
// eps and the bandwidths are stored unconstrained: eps = sigmoid(eps_raw),
// gamma = exp(log_gamma), so gradient steps cannot leave the valid region.
struct DeepKernelState {
    MlpSpec featurizer_spec;
    ModelWeights featurizer;
    double eps_raw = 0.0;
    double log_gamma_k = 0.0;
    double log_gamma_q = 0.0;

    static DeepKernelState create(int input_dim, int hidden, int depth, Rng& rng);

    double eps() const { return 1.0 / (1.0 + std::exp(-eps_raw)); }
    double gamma_k() const { return std::exp(log_gamma_k); }
    double gamma_q() const { return std::exp(log_gamma_q); }

    size_t param_count() const { return featurizer.size() + 3; }
    // Flat layout: featurizer parameters, then eps_raw, log_gamma_k, log_gamma_q.
    std::vector<double> flatten() const;
    void unflatten(std::span<const double> flat);
};

Matrix deep_kernel_eval(const DeepKernelState& state, const Matrix& x, const Matrix& y);

GramBlocks deep_gram_blocks(const DeepKernelState& state, const Matrix& x, const Matrix& y);

double mmd2_deep(const DeepKernelState& state, const Matrix& x, const Matrix& y);

double mmd_variance_deep(const DeepKernelState& state, const Matrix& x, const Matrix& y,
                         double regularizer);

// d/dX of the deep-kernel unbiased MMD^2 (kernel parameters and Y frozen).
// The gradient flows through both the featurizer and the safeguard kernel.
ValueGradX deep_mmd2_grad_x(const DeepKernelState& state, const Matrix& x, const Matrix& y);

// Median of pairwise squared distances between rows of z (off-diagonal
// pairs). Used for bandwidth initialization.
double median_pairwise_sqdist(const Matrix& z);

// Optional preprocessing toggle: standardize both batches with pooled
// per-dimension mean/std (std floored at 1e-12).
void standardize_pair(Matrix& x, Matrix& y);

}  // namespace fedmmd
