#include <doctest.h>

#include <cmath>

#include "fedmmd/mkmmd.hpp"
#include "fedmmd/selfcheck.hpp"

using namespace fedmmd;

namespace {

Matrix rand_mat(Rng& rng, int r, int c, double scale = 1.0, double shift = 0.0) {
    Matrix m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = shift + scale * rng.normal();
    return m;
}

}  // namespace

TEST_CASE("solve_qp: d=1 equality constraint pins beta") {
    Matrix q(1, 1);
    q << 0.0;
    Vector m(1);
    m << 2.0;
    QpSolution sol = solve_qp({q, m, 1e-3});
    CHECK(sol.status == QpStatus::optimal);
    CHECK(sol.beta(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(sol.kkt_residual <= 1e-7);
}

TEST_CASE("solve_qp: symmetric two-kernel problem splits evenly") {
    const double eps = 1e-3;
    Matrix q = Matrix::Identity(2, 2) * (1.0 - eps);  // Q + eps I = I
    Vector m(2);
    m << 1.0, 1.0;
    QpSolution sol = solve_qp({q, m, eps});
    CHECK(sol.beta(0) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(sol.beta(1) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(sol.objective == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("solve_qp: matches dense grid search on random d<=3 instances") {
    Rng rng(41);
    for (int it = 0; it < 12; ++it) {
        int d = 1 + rng.uniform_int(3);
        Matrix b = rand_mat(rng, d, d, 0.4);
        Matrix q = b.transpose() * b;
        q.diagonal().array() += 0.3;
        Vector m(d);
        for (int j = 0; j < d; ++j) m(j) = rng.uniform(0.6, 1.8);
        QpSolution sol = solve_qp({q, m, 1e-3});
        Vector ref = oracles::grid_search_qp(q, m, 1e-3, 1e-3);
        CHECK((sol.beta - ref).lpNorm<Eigen::Infinity>() <= 2.1e-3);
        CHECK(sol.beta.dot(m) == doctest::Approx(1.0).epsilon(1e-8));
        CHECK(sol.beta.minCoeff() >= -1e-12);
        // never worse than the grid optimum beyond tolerance
        Matrix a = q;
        a.diagonal().array() += 1e-3;
        CHECK(sol.beta.dot(a * sol.beta) <= ref.dot(a * ref) + 1e-6);
    }
}

TEST_CASE("solve_qp: objective no worse than the normalized uniform point") {
    Rng rng(42);
    const int d = 6;
    Matrix b = rand_mat(rng, d, d, 0.5);
    Matrix q = b.transpose() * b;
    Vector m(d);
    for (int j = 0; j < d; ++j) m(j) = rng.uniform(0.2, 1.2);
    QpSolution sol = solve_qp({q, m, 1e-3});
    Vector uniform = Vector::Constant(d, 1.0);
    uniform /= m.dot(uniform);  // feasible scaling of the uniform direction
    Matrix a = q;
    a.diagonal().array() += 1e-3;
    CHECK(sol.beta.dot(a * sol.beta) <= uniform.dot(a * uniform) + 1e-12);
}

TEST_CASE("solve_qp: no positive estimate falls back instead of throwing") {
    Matrix q = Matrix::Identity(3, 3);
    Vector m(3);
    m << -0.2, -0.5, 0.0;
    QpSolution sol = solve_qp({q, m, 1e-3});
    CHECK(sol.status == QpStatus::fallback_single_kernel);
    CHECK(sol.beta.sum() == doctest::Approx(1.0));
}

TEST_CASE("solve_qp: warm start converges to the same solution") {
    Rng rng(43);
    const int d = 18;
    Matrix b = rand_mat(rng, 9, d, 0.5);
    Matrix q = b.transpose() * b;
    Vector m(d);
    for (int j = 0; j < d; ++j) m(j) = rng.uniform(-0.4, 1.2);
    if (m.maxCoeff() <= 0.0) m(0) = 1.0;
    QpSolution cold = solve_qp({q, m, 1e-3});
    Vector warm_point = cold.beta.array() + 0.05;
    QpSolution warm = solve_qp({q, m, 1e-3}, &warm_point);
    CHECK((cold.beta - warm.beta).lpNorm<Eigen::Infinity>() <= 1e-6);
    CHECK(warm.kkt_residual <= 1e-7);
}

TEST_CASE("fallback_select: ratio ranking and tie-breaking") {
    Vector m(2), s(2);
    m << -1.0, -2.0;
    s << 1.0, 1.0;
    QpSolution sol = fallback_select(m, s);
    CHECK(sol.beta(0) == 1.0);
    CHECK(sol.status == QpStatus::fallback_single_kernel);

    m << -2.0, -2.0;
    s << 1.0, 2.0;  // ratios -2 vs -1: pick index 1
    sol = fallback_select(m, s);
    CHECK(sol.beta(1) == 1.0);

    m << -1.0, -2.0;
    s << 1.0, 2.0;  // equal ratios: lowest index wins
    sol = fallback_select(m, s);
    CHECK(sol.beta(0) == 1.0);

    CHECK_THROWS_AS(fallback_select(Vector(), Vector()), DomainError);
    Vector bad(1);
    bad << 0.0;
    Vector mm(1);
    mm << 1.0;
    CHECK_THROWS_AS(fallback_select(mm, bad), DomainError);
}

TEST_CASE("update_bank: optimized weights beat uniform on separated Gaussians") {
    Rng rng(44);
    Matrix x = rand_mat(rng, 60, 4);
    Matrix y = rand_mat(rng, 60, 4, 1.0, 1.5);
    KernelBank bank = KernelBank::default_bank();
    BankUpdate up = update_bank(bank, x, y);
    CHECK(up.solution.status == QpStatus::optimal);
    BankMmd est = mmd2_bank(bank, x, y);
    Matrix q = covariance_qk(bank, x, y);
    double uniform_ratio = studentized_ratio(est.m_hat, q, bank.beta);
    CHECK(up.ratio >= uniform_ratio - 1e-9);
    CHECK(up.bank.size() == 18);
    CHECK(up.bank.beta.minCoeff() >= -1e-12);
}

TEST_CASE("update_bank: identical inputs take the fallback path") {
    Rng rng(45);
    Matrix x = rand_mat(rng, 12, 3);
    KernelBank bank = KernelBank::default_bank();
    BankUpdate up = update_bank(bank, x, x);
    CHECK(up.solution.status == QpStatus::fallback_single_kernel);
    CHECK(up.bank.beta.sum() == doctest::Approx(1.0));
    CHECK(up.bank.size() == 18);
}

TEST_CASE("project_weight_simplex: feasibility is exact") {
    Rng rng(46);
    for (int it = 0; it < 30; ++it) {
        int d = 1 + rng.uniform_int(18);
        Vector v(d), m(d);
        for (int j = 0; j < d; ++j) {
            v(j) = rng.normal(0.0, 2.0);
            m(j) = rng.uniform(-1.0, 1.5);
        }
        if (m.maxCoeff() <= 0.0) m(0) = 0.7;
        Vector p = project_weight_simplex(v, m);
        CHECK(p.minCoeff() >= 0.0);
        CHECK(std::abs(p.dot(m) - 1.0) <= 1e-9);
    }
}
