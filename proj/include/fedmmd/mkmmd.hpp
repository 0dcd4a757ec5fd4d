#pragma once

#include "fedmmd/kernels.hpp"
#include "fedmmd/matrix.hpp"

namespace fedmmd {

// Kernel-weight selection: minimize beta^T (Q_hat + eps I) beta subject to
// beta^T m_hat = 1 and beta >= 0. Solvable only when m_hat has a positive
// entry; otherwise the caller falls back to the best single kernel.
struct QpProblem {
    Matrix q_hat;
    Vector m_hat;
    double epsilon_shift = 1e-3;
};

enum class QpStatus { optimal, fallback_single_kernel };

struct QpSolution {
    Vector beta;
    double objective = 0.0;
    QpStatus status = QpStatus::optimal;
    double kkt_residual = 0.0;
};

// Exact Euclidean projection onto {beta >= 0, m^T beta = 1} via bisection on
// the equality multiplier. Requires max(m) > 0 (otherwise the set is empty).
Vector project_weight_simplex(const Vector& v, const Vector& m);

// Accelerated projected gradient descent with an exact active-set polish on
// the identified support. Falls back to the single-kernel rule when m_hat has
// no positive entry (never throws for that case).
QpSolution solve_qp(const QpProblem& p, const Vector* warm_start = nullptr);

// One-hot at argmax_j m_hat_j / sigma_j; ties break to the lowest index.
QpSolution fallback_select(const Vector& m_hat, const Vector& sigma);

struct BankUpdate {
    KernelBank bank;
    QpSolution solution;
    // Studentized diagnostic m_hat . beta / sqrt(beta^T Q_hat beta) for the
    // new weights (0 when the denominator vanishes).
    double ratio = 0.0;
};

struct MkmmdOptions {
    double epsilon_shift = 1e-3;
    double variance_reg = 1e-8;
};

// Re-optimize the bank weights on latent samples x (local) and y (reference).
BankUpdate update_bank(const KernelBank& bank, const Matrix& x, const Matrix& y,
                       const MkmmdOptions& opts = {});

double studentized_ratio(const Vector& m_hat, const Matrix& q_hat, const Vector& beta);

}  // namespace fedmmd
