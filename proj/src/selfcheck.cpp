#include "fedmmd/selfcheck.hpp"

#include <cmath>
#include <sstream>

#include "fedmmd/mmdd.hpp"
#include "fedmmd/penalties.hpp"

namespace fedmmd {

namespace oracles {

double naive_rbf(double gamma, const Matrix& x, Eigen::Index i, const Matrix& y, Eigen::Index j) {
    double d2 = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        double diff = x(i, c) - y(j, c);
        d2 += diff * diff;
    }
    return std::exp(-gamma * d2);
}

double naive_mmd2_unbiased(const RbfKernel& k, const Matrix& x, const Matrix& y) {
    const Eigen::Index n = x.rows();
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) continue;
            sxx += naive_rbf(k.gamma, x, i, x, j);
            syy += naive_rbf(k.gamma, y, i, y, j);
            sxy += naive_rbf(k.gamma, x, i, y, j);
        }
    const double denom = static_cast<double>(n) * (n - 1);
    return (sxx + syy - 2.0 * sxy) / denom;
}

double naive_mmd_variance(const RbfKernel& k, const Matrix& x, const Matrix& y, double reg) {
    const Eigen::Index n = x.rows();
    std::vector<double> hbar(n, 0.0);
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            double h = naive_rbf(k.gamma, x, i, x, j) + naive_rbf(k.gamma, y, i, y, j) -
                       naive_rbf(k.gamma, x, i, y, j) - naive_rbf(k.gamma, x, j, y, i);
            hbar[i] += h;
            total += h;
        }
        hbar[i] /= static_cast<double>(n);
    }
    double mean = total / static_cast<double>(n * n);
    double v1 = 0.0;
    for (double h : hbar) v1 += h * h;
    v1 /= static_cast<double>(n);
    double sigma2 = 4.0 * (v1 - mean * mean);
    return std::max(sigma2, 0.0) + reg;
}

Matrix naive_covariance_qk(const KernelBank& bank, const Matrix& x, const Matrix& y) {
    const int nq = static_cast<int>(x.rows()) / 2;
    const int d = bank.size();
    Matrix h(nq, d);
    for (int i = 0; i < nq; ++i)
        for (int j = 0; j < d; ++j) {
            double g = bank.kernels[j].gamma;
            h(i, j) = naive_rbf(g, x, 2 * i, x, 2 * i + 1) + naive_rbf(g, y, 2 * i, y, 2 * i + 1) -
                      naive_rbf(g, x, 2 * i, y, 2 * i + 1) - naive_rbf(g, x, 2 * i + 1, y, 2 * i);
        }
    Matrix q(d, d);
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
            double ma = h.col(a).mean(), mb = h.col(b).mean();
            double s = 0.0;
            for (int i = 0; i < nq; ++i) s += (h(i, a) - ma) * (h(i, b) - mb);
            q(a, b) = s / static_cast<double>(nq - 1);
        }
    return q;
}

Vector grid_search_qp(const Matrix& q_hat, const Vector& m_hat, double epsilon_shift,
                      double resolution) {
    const int d = static_cast<int>(m_hat.size());
    if (d < 1 || d > 3) throw DomainError("grid_search_qp: d must be in [1, 3]");
    Matrix a = q_hat;
    a.diagonal().array() += epsilon_shift;

    int pivot = 0;
    m_hat.maxCoeff(&pivot);
    if (m_hat(pivot) <= 0.0) throw DomainError("grid_search_qp: no positive m_hat entry");

    // Bound the search box by |beta*|^2 <= f(best vertex) / lambda_min(A).
    double best_vertex = std::numeric_limits<double>::infinity();
    for (int j = 0; j < d; ++j)
        if (m_hat(j) > 0.0)
            best_vertex = std::min(best_vertex, a(j, j) / (m_hat(j) * m_hat(j)));
    Eigen::SelfAdjointEigenSolver<Matrix> es(a);
    double lmin = std::max(es.eigenvalues().minCoeff(), 1e-9);
    const double bound = std::sqrt(best_vertex / lmin) + resolution;

    std::vector<int> free;
    for (int j = 0; j < d; ++j)
        if (j != pivot) free.push_back(j);

    Vector beta = Vector::Zero(d), best = Vector::Zero(d);
    best(pivot) = 1.0 / m_hat(pivot);
    double best_obj = best.dot(a * best);
    const auto steps = static_cast<long>(bound / resolution);

    std::function<void(size_t)> scan = [&](size_t fi) {
        if (fi == free.size()) {
            double rest = 1.0;
            for (int j : free) rest -= m_hat(j) * beta(j);
            double bp = rest / m_hat(pivot);
            if (bp < 0.0) return;
            beta(pivot) = bp;
            double obj = beta.dot(a * beta);
            if (obj < best_obj) {
                best_obj = obj;
                best = beta;
            }
            return;
        }
        for (long s = 0; s <= steps; ++s) {
            beta(free[fi]) = s * resolution;
            scan(fi + 1);
        }
    };
    scan(0);
    return best;
}

double max_rel_error_fd(const std::function<double(const std::vector<double>&)>& f,
                        const std::vector<double>& x0, const std::vector<double>& analytic,
                        double h, double floor) {
    if (x0.size() != analytic.size()) throw ShapeError("max_rel_error_fd: size mismatch");
    double worst = 0.0;
    std::vector<double> x = x0;
    for (size_t i = 0; i < x.size(); ++i) {
        x[i] = x0[i] + h;
        double fp = f(x);
        x[i] = x0[i] - h;
        double fm = f(x);
        x[i] = x0[i];
        double fd = (fp - fm) / (2.0 * h);
        double rel = std::abs(fd - analytic[i]) /
                     std::max({std::abs(fd), std::abs(analytic[i]), floor});
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace oracles

namespace {

Matrix random_matrix(Rng& rng, int r, int c, double scale = 1.0) {
    Matrix m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
    return m;
}

CheckResult estimator_suite(bool full) {
    const int instances = full ? 100 : 20;
    Rng rng(20240);
    double worst = 0.0;
    for (int it = 0; it < instances; ++it) {
        int n = 4 + rng.uniform_int(9);  // 4..12
        int dim = 1 + rng.uniform_int(5);
        Matrix x = random_matrix(rng, n, dim);
        Matrix y = random_matrix(rng, n, dim, 1.3);
        RbfKernel k{std::exp(rng.uniform(-2.0, 1.0))};
        worst = std::max(worst,
                         std::abs(mmd2_unbiased(k, x, y) - oracles::naive_mmd2_unbiased(k, x, y)));
        worst = std::max(worst, std::abs(mmd_variance(k, x, y, 1e-8) -
                                         oracles::naive_mmd_variance(k, x, y, 1e-8)));
        KernelBank bank = KernelBank::default_bank(1 + rng.uniform_int(5));
        Matrix q = covariance_qk(bank, x, y);
        Matrix qn = oracles::naive_covariance_qk(bank, x, y);
        worst = std::max(worst, (q - qn).cwiseAbs().maxCoeff());
        BankMmd bm = mmd2_bank(bank, x, y);
        for (int j = 0; j < bank.size(); ++j)
            worst = std::max(worst, std::abs(bm.m_hat(j) - oracles::naive_mmd2_unbiased(
                                                               bank.kernels[j], x, y)));
    }
    std::ostringstream os;
    os << instances << " instances, max abs deviation " << worst;
    return {"estimators vs naive loops (tol 1e-10)", worst <= 1e-10, os.str()};
}

CheckResult qp_grid_suite(bool full) {
    const int instances = full ? 50 : 8;
    Rng rng(20241);
    double worst = 0.0;
    for (int it = 0; it < instances; ++it) {
        int d = 1 + rng.uniform_int(3);
        Matrix b = random_matrix(rng, d, d, 0.4);
        Matrix q = b.transpose() * b;
        q.diagonal().array() += 0.3;
        Vector m(d);
        for (int j = 0; j < d; ++j) m(j) = rng.uniform(0.6, 1.8);
        QpSolution sol = solve_qp({q, m, 1e-3});
        Vector ref = oracles::grid_search_qp(q, m, 1e-3, 1e-3);
        worst = std::max(worst, (sol.beta - ref).lpNorm<Eigen::Infinity>());
    }
    std::ostringstream os;
    os << instances << " instances (d<=3), max |beta - grid| " << worst;
    return {"QP vs dense grid search (tol 1e-3 + grid step)", worst <= 2.1e-3, os.str()};
}

CheckResult qp_kkt_suite(bool full) {
    const int instances = full ? 20 : 5;
    Rng rng(20242);
    double worst = 0.0;
    for (int it = 0; it < instances; ++it) {
        const int d = 18;
        Matrix b = random_matrix(rng, 9, d, 0.5);
        Matrix q = b.transpose() * b;  // rank-deficient PSD, like small-batch Q_hat
        Vector m(d);
        for (int j = 0; j < d; ++j) m(j) = rng.uniform(-0.5, 1.5);
        if (m.maxCoeff() <= 0.0) m(0) = 0.5;
        QpSolution sol = solve_qp({q, m, 1e-3});
        worst = std::max(worst, sol.kkt_residual);
        worst = std::max(worst, std::abs(sol.beta.dot(m) - 1.0));
        if (sol.beta.minCoeff() < -1e-12) worst = std::max(worst, 1.0);
    }
    std::ostringstream os;
    os << instances << " instances at d=18, max KKT residual " << worst;
    return {"QP KKT residual (tol 1e-7)", worst <= 1e-7, os.str()};
}

CheckResult gradient_suite(bool full) {
    const int instances = full ? 50 : 10;
    Rng rng(20243);
    double worst_mlp = 0.0, worst_pen = 0.0, worst_ratio = 0.0;

    for (int it = 0; it < instances; ++it) {
        // Task network loss gradient.
        MlpSpec spec = MlpSpec::task_net(6, 4, 3);
        ModelWeights w(spec);
        w.init_uniform_fan_in(rng);
        int n = 5;
        Matrix batch = random_matrix(rng, n, 6);
        std::vector<int> labels(n);
        for (auto& y : labels) y = rng.uniform_int(3);
        auto [loss, grads] = loss_and_grad(spec, w, batch, labels);
        std::vector<double> flat(w.raw().begin(), w.raw().end());
        std::vector<double> analytic(grads.raw().begin(), grads.raw().end());
        auto f = [&](const std::vector<double>& p) {
            ModelWeights wp = w;
            wp.raw().assign(p.begin(), p.end());
            Matrix logits = mlp_forward(spec, wp, batch);
            return cross_entropy(logits, labels, nullptr);
        };
        worst_mlp = std::max(
            worst_mlp, oracles::max_rel_error_fd(f, flat, analytic, 1e-5, 1e-4));

        // Bank MMD gradient w.r.t. local features.
        int m = 3, nf = 6;
        Matrix fl = random_matrix(rng, nf, m);
        Matrix fg = random_matrix(rng, nf, m, 1.2);
        KernelBank bank = KernelBank::default_bank(4);
        for (int j = 0; j < 4; ++j) bank.beta(j) = rng.uniform(0.0, 1.0);
        ValueGradX vg = bank_mmd2_grad_x(bank, fl, fg);
        std::vector<double> flat_fl(fl.data(), fl.data() + fl.size());
        std::vector<double> flat_grad(vg.dx.data(), vg.dx.data() + vg.dx.size());
        auto fpen = [&](const std::vector<double>& p) {
            Matrix flp = Eigen::Map<const Matrix>(p.data(), nf, m);
            return mmd2_bank(bank, flp, fg).combined;
        };
        worst_pen = std::max(worst_pen,
                             oracles::max_rel_error_fd(fpen, flat_fl, flat_grad, 1e-6));

        // Deep-kernel ratio objective: all parameter groups at once.
        Rng krng(rng.next_u64());
        DeepKernelState state = DeepKernelState::create(m, 4, 2, krng);
        state.eps_raw = rng.uniform(-0.5, 0.5);
        state.log_gamma_k = rng.uniform(-0.5, 0.5);
        state.log_gamma_q = rng.uniform(-0.5, 0.5);
        RatioObjective ro = ratio_objective(state, fl, fg, 1e-8);
        std::vector<double> kflat = state.flatten();
        auto fratio = [&](const std::vector<double>& p) {
            DeepKernelState s = state;
            s.unflatten(p);
            return ratio_objective(s, fl, fg, 1e-8).j;
        };
        worst_ratio = std::max(
            worst_ratio, oracles::max_rel_error_fd(fratio, kflat, ro.grads, 1e-6, 1e-4));
    }
    std::ostringstream os;
    os << instances << " instances; max rel err mlp " << worst_mlp << ", penalty " << worst_pen
       << ", ratio " << worst_ratio;
    bool ok = worst_mlp <= 1e-6 && worst_pen <= 1e-5 && worst_ratio <= 1e-4;
    return {"finite-difference gradient suite", ok, os.str()};
}

CheckResult invariants_suite() {
    Rng rng(20244);
    bool ok = true;
    std::ostringstream os;

    // Gram symmetry + unit diagonal.
    Matrix x = random_matrix(rng, 12, 4);
    Matrix g = gram(RbfKernel{0.7}, x, x);
    ok = ok && (g - g.transpose()).cwiseAbs().maxCoeff() == 0.0;
    ok = ok && (g.diagonal().array() - 1.0).abs().maxCoeff() <= 1e-15;

    // Identical samples: zero MMD, variance floor exact.
    double m0 = mmd2_unbiased(RbfKernel{1.0}, x, x);
    double v0 = mmd_variance(RbfKernel{1.0}, x, x, 1e-8);
    ok = ok && m0 == 0.0 && v0 == 1e-8;

    // Q_hat symmetric PSD.
    Matrix y = random_matrix(rng, 12, 4, 1.4);
    Matrix q = covariance_qk(KernelBank::default_bank(6), x, y);
    ok = ok && (q - q.transpose()).cwiseAbs().maxCoeff() == 0.0;
    Eigen::SelfAdjointEigenSolver<Matrix> es(q);
    ok = ok && es.eigenvalues().minCoeff() >= -1e-10;

    os << "gram/identity/covariance invariants";
    return {"kernel invariants", ok, os.str()};
}

}  // namespace

std::string CheckReport::to_text() const {
    std::ostringstream os;
    for (const auto& c : checks)
        os << (c.passed ? "[PASS] " : "[FAIL] ") << c.name << ": " << c.detail << '\n';
    os << (all_passed() ? "all checks passed" : "CHECKS FAILED") << '\n';
    return os.str();
}

CheckReport run_self_check(bool full) {
    CheckReport report;
    report.checks.push_back(estimator_suite(full));
    report.checks.push_back(qp_grid_suite(full));
    report.checks.push_back(qp_kkt_suite(full));
    report.checks.push_back(gradient_suite(full));
    report.checks.push_back(invariants_suite());
    return report;
}

}  // namespace fedmmd
