#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fedmmd/kernels.hpp"
#include "fedmmd/mkmmd.hpp"

namespace fedmmd {

// Reference implementations, deliberately written as plain loops over the
// defining formulas and kept off every production code path. They exist to
// cross-check the estimator and solver implementations (tests and the CLI
// `verify` verb).
namespace oracles {

double naive_rbf(double gamma, const Matrix& x, Eigen::Index i, const Matrix& y, Eigen::Index j);

double naive_mmd2_unbiased(const RbfKernel& k, const Matrix& x, const Matrix& y);

double naive_mmd_variance(const RbfKernel& k, const Matrix& x, const Matrix& y, double reg);

Matrix naive_covariance_qk(const KernelBank& bank, const Matrix& x, const Matrix& y);

// Dense grid search over the constraint slice {beta >= 0, m^T beta = 1} at
// the given resolution; d <= 3 only.
Vector grid_search_qp(const Matrix& q_hat, const Vector& m_hat, double epsilon_shift,
                      double resolution);

// Max relative error between an analytic gradient and central finite
// differences of `f` at `x0` (step h), relative to max(|analytic|, |fd|, floor).
double max_rel_error_fd(const std::function<double(const std::vector<double>&)>& f,
                        const std::vector<double>& x0, const std::vector<double>& analytic,
                        double h, double floor = 1e-6);

}  // namespace oracles

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct CheckReport {
    std::vector<CheckResult> checks;
    bool all_passed() const {
        for (const auto& c : checks)
            if (!c.passed) return false;
        return true;
    }
    std::string to_text() const;
};

// Estimator/QP/gradient oracle suites plus core invariants. `full` runs the
// instance counts used by the acceptance suite; otherwise a fast subset.
CheckReport run_self_check(bool full);

}  // namespace fedmmd
