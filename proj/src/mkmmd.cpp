#include "fedmmd/mkmmd.hpp"

#include <Eigen/Cholesky>
#include <cmath>

namespace fedmmd {

namespace {

constexpr int kMaxIterations = 10000;
constexpr double kStepTol = 1e-10;
constexpr double kKktTol = 1e-9;
constexpr double kSupportTol = 1e-12;

double kkt_residual(const Matrix& a, const Vector& m, const Vector& beta) {
    Vector grad = 2.0 * (a * beta);
    double num = 0.0, den = 0.0;
    for (Eigen::Index j = 0; j < beta.size(); ++j) {
        if (beta(j) > kSupportTol) {
            num += grad(j) * m(j);
            den += m(j) * m(j);
        }
    }
    double tau = den > 0.0 ? num / den : 0.0;
    Vector s = grad - tau * m;
    double r = std::abs(m.dot(beta) - 1.0);
    for (Eigen::Index j = 0; j < beta.size(); ++j) {
        if (beta(j) > kSupportTol)
            r = std::max(r, std::abs(s(j)));
        else
            r = std::max(r, std::max(0.0, -s(j)));
        r = std::max(r, std::max(0.0, -beta(j)));
    }
    return r;
}

// Solve the equality-constrained problem restricted to the support set and
// check it against the inequality constraints. Returns false when the
// restricted solution is not valid for the full problem.
bool polish_on_support(const Matrix& a, const Vector& m, Vector& beta) {
    std::vector<Eigen::Index> support;
    for (Eigen::Index j = 0; j < beta.size(); ++j)
        if (beta(j) > 1e-9) support.push_back(j);
    if (support.empty()) return false;
    const auto k = static_cast<Eigen::Index>(support.size());
    Matrix as(k, k);
    Vector ms(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        ms(i) = m(support[i]);
        for (Eigen::Index j = 0; j < k; ++j) as(i, j) = a(support[i], support[j]);
    }
    Eigen::LDLT<Matrix> ldlt(as);
    if (ldlt.info() != Eigen::Success) return false;
    Vector w = ldlt.solve(ms);
    double denom = ms.dot(w);
    if (!(std::abs(denom) > 1e-300)) return false;
    Vector bs = w / denom;
    if ((bs.array() < 0.0).any()) return false;
    Vector candidate = Vector::Zero(beta.size());
    for (Eigen::Index i = 0; i < k; ++i) candidate(support[i]) = bs(i);
    // Dual feasibility on the inactive set.
    double tau = 2.0 / denom;
    Vector s = 2.0 * (a * candidate) - tau * m;
    for (Eigen::Index j = 0; j < beta.size(); ++j)
        if (candidate(j) <= 0.0 && s(j) < -1e-9) return false;
    beta = candidate;
    return true;
}

}  // namespace

Vector project_weight_simplex(const Vector& v, const Vector& m) {
    if (v.size() != m.size() || v.size() == 0)
        throw ShapeError("project_weight_simplex: size mismatch");
    if (m.maxCoeff() <= 0.0)
        throw DomainError("project_weight_simplex: feasible set is empty");
    auto g = [&](double tau) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < v.size(); ++j)
            s += m(j) * std::max(0.0, v(j) - tau * m(j));
        return s;
    };
    // g is continuous and nonincreasing with g(-inf) = +inf; bracket a root
    // of g(tau) = 1 by doubling, then bisect.
    double lo = 0.0, hi = 0.0, step = 1.0;
    if (g(0.0) >= 1.0) {
        hi = step;
        while (g(hi) > 1.0 && hi < 1e30) {
            lo = hi;
            hi *= 2.0;
        }
    } else {
        lo = -step;
        while (g(lo) < 1.0 && lo > -1e30) {
            hi = lo;
            lo *= 2.0;
        }
    }
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (g(mid) >= 1.0)
            lo = mid;
        else
            hi = mid;
    }
    double tau = 0.5 * (lo + hi);
    return (v - tau * m).cwiseMax(0.0);
}

QpSolution solve_qp(const QpProblem& p, const Vector* warm_start) {
    const auto d = p.m_hat.size();
    if (d < 1) throw DomainError("solve_qp: empty problem");
    if (p.q_hat.rows() != d || p.q_hat.cols() != d)
        throw ShapeError("solve_qp: Q_hat must be d x d");
    if (!(p.epsilon_shift > 0.0)) throw DomainError("solve_qp: epsilon_shift must be positive");

    if (p.m_hat.maxCoeff() <= 0.0) {
        // No positive MMD estimate: the equality constraint is unreachable.
        // Degenerate sigma ranking (uniform) keeps this total; callers with
        // variance estimates use fallback_select directly.
        return fallback_select(p.m_hat, Vector::Ones(d));
    }

    Matrix a = 0.5 * (p.q_hat + p.q_hat.transpose());
    a.diagonal().array() += p.epsilon_shift;

    Vector beta;
    if (warm_start && warm_start->size() == d && warm_start->maxCoeff() > 0.0) {
        beta = project_weight_simplex(*warm_start, p.m_hat);
    } else {
        beta = project_weight_simplex(Vector::Constant(d, 1.0 / static_cast<double>(d)), p.m_hat);
    }

    // Gershgorin bound on the Lipschitz constant of the gradient 2*A*beta.
    double lip = 2.0 * a.cwiseAbs().rowwise().sum().maxCoeff();
    if (!(lip > 0.0)) lip = 1.0;
    const double step = 1.0 / lip;

    // FISTA-style accelerated projected gradient with restart on objective
    // increase along the momentum direction.
    Vector y = beta;
    double t = 1.0;
    for (int it = 0; it < kMaxIterations; ++it) {
        Vector grad = 2.0 * (a * y);
        Vector next = project_weight_simplex(y - step * grad, p.m_hat);
        double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        Vector diff = next - beta;
        if (diff.dot(y - next) > 0.0) {
            // restart momentum
            y = next;
            t_next = 1.0;
        } else {
            y = next + ((t - 1.0) / t_next) * diff;
        }
        double delta = diff.lpNorm<Eigen::Infinity>();
        beta = next;
        t = t_next;
        if (delta < kStepTol && kkt_residual(a, p.m_hat, beta) < kKktTol) break;
    }
    polish_on_support(a, p.m_hat, beta);

    QpSolution sol;
    sol.beta = beta;
    sol.objective = beta.dot(a * beta);
    sol.status = QpStatus::optimal;
    sol.kkt_residual = kkt_residual(a, p.m_hat, beta);
    return sol;
}

QpSolution fallback_select(const Vector& m_hat, const Vector& sigma) {
    if (m_hat.size() == 0) throw DomainError("fallback_select: empty input");
    if (m_hat.size() != sigma.size()) throw ShapeError("fallback_select: size mismatch");
    Eigen::Index best = 0;
    double best_ratio = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < m_hat.size(); ++j) {
        if (!(sigma(j) > 0.0)) throw DomainError("fallback_select: sigma must be positive");
        double ratio = m_hat(j) / sigma(j);
        if (ratio > best_ratio) {
            best_ratio = ratio;
            best = j;
        }
    }
    QpSolution sol;
    sol.beta = Vector::Zero(m_hat.size());
    sol.beta(best) = 1.0;
    sol.objective = 0.0;
    sol.status = QpStatus::fallback_single_kernel;
    sol.kkt_residual = 0.0;
    return sol;
}

double studentized_ratio(const Vector& m_hat, const Matrix& q_hat, const Vector& beta) {
    double var = beta.dot(q_hat * beta);
    if (!(var > 0.0)) return 0.0;
    return m_hat.dot(beta) / std::sqrt(var);
}

BankUpdate update_bank(const KernelBank& bank, const Matrix& x, const Matrix& y,
                       const MkmmdOptions& opts) {
    bank.validate();
    BankMmd est = mmd2_bank(bank, x, y);
    Matrix q = covariance_qk(bank, x, y);

    BankUpdate out;
    if (est.m_hat.maxCoeff() > 0.0) {
        QpProblem p{q, est.m_hat, opts.epsilon_shift};
        out.solution = solve_qp(p, &bank.beta);
    } else {
        Vector sigma = bank_variances(bank, x, y, opts.variance_reg).cwiseSqrt();
        out.solution = fallback_select(est.m_hat, sigma);
    }
    out.bank = bank;
    out.bank.beta = out.solution.beta;
    out.ratio = studentized_ratio(est.m_hat, q, out.solution.beta);
    return out;
}

}  // namespace fedmmd
