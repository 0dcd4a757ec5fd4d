#include <doctest.h>

#include <cmath>

#include "fedmmd/kernels.hpp"
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

TEST_CASE("gram: k(x,x) = 1 and the direct formula") {
    Matrix z(1, 1);
    z << 0.0;
    CHECK(gram(RbfKernel{1.0}, z, z)(0, 0) == 1.0);
    Matrix o(1, 1);
    o << 1.0;
    CHECK(gram(RbfKernel{1.0}, z, o)(0, 0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("gram: rectangular blocks match a brute-force pairwise loop") {
    Rng rng(11);
    Matrix x = rand_mat(rng, 5, 3);
    Matrix y = rand_mat(rng, 4, 3);
    Matrix g = gram(RbfKernel{0.7}, x, y);
    REQUIRE(g.rows() == 5);
    REQUIRE(g.cols() == 4);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 4; ++j) {
            CHECK(g(i, j) == doctest::Approx(oracles::naive_rbf(0.7, x, i, y, j)).epsilon(1e-12));
            CHECK(g(i, j) > 0.0);
            CHECK(g(i, j) <= 1.0);
        }
    CHECK_THROWS_AS(gram(RbfKernel{1.0}, x, rand_mat(rng, 4, 2)), ShapeError);
}

TEST_CASE("gram: symmetric with unit diagonal on identical inputs") {
    Rng rng(12);
    Matrix x = rand_mat(rng, 9, 4);
    Matrix g = gram(RbfKernel{0.5}, x, x);
    CHECK((g - g.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((g.diagonal().array() - 1.0).abs().maxCoeff() <= 1e-15);
    DeepKernelState dk = DeepKernelState::create(4, 6, 2, rng);
    Matrix gd = deep_kernel_eval(dk, x, x);
    CHECK((gd - gd.transpose()).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK((gd.diagonal().array() - 1.0).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("mmd2_unbiased: identical samples cancel exactly") {
    Rng rng(13);
    Matrix x = rand_mat(rng, 6, 3);
    CHECK(mmd2_unbiased(RbfKernel{1.3}, x, x) == 0.0);
}

TEST_CASE("mmd2_unbiased: two-sample hand computation") {
    // X = {0, 0}, Y = {1, 1} in R^1, gamma = 1: 1 + 1 - 2 e^{-1}.
    Matrix x(2, 1), y(2, 1);
    x << 0.0, 0.0;
    y << 1.0, 1.0;
    double v = mmd2_unbiased(RbfKernel{1.0}, x, y);
    CHECK(v == doctest::Approx(2.0 - 2.0 * std::exp(-1.0)).epsilon(1e-12));
    CHECK(v == doctest::Approx(1.264241).epsilon(1e-6));
}

TEST_CASE("mmd2_unbiased: needs two samples") {
    Matrix x(1, 2), y(1, 2);
    x.setZero();
    y.setOnes();
    CHECK_THROWS_AS(mmd2_unbiased(RbfKernel{1.0}, x, y), DomainError);
}

TEST_CASE("mmd2_unbiased: unbiased under the null within Monte-Carlo error") {
    // 1000 resamples from identical Gaussians; the mean estimate must sit
    // within 4 standard errors of zero.
    Rng rng(14);
    const int resamples = 1000, n = 20, dim = 3;
    std::vector<double> vals(resamples);
    for (auto& v : vals) {
        Matrix x = rand_mat(rng, n, dim);
        Matrix y = rand_mat(rng, n, dim);
        v = mmd2_unbiased(RbfKernel{0.5}, x, y);
    }
    auto [mean, sd] = [&] {
        double m = 0.0;
        for (double v : vals) m += v;
        m /= resamples;
        double s = 0.0;
        for (double v : vals) s += (v - m) * (v - m);
        return std::pair<double, double>{m, std::sqrt(s / (resamples - 1))};
    }();
    double se = sd / std::sqrt(static_cast<double>(resamples));
    CHECK(std::abs(mean) <= 4.0 * se);
}

TEST_CASE("mmd2_bank: one-hot weights reduce to the single kernel") {
    Rng rng(15);
    Matrix x = rand_mat(rng, 8, 4);
    Matrix y = rand_mat(rng, 8, 4, 1.0, 0.5);
    KernelBank bank = KernelBank::default_bank(5);
    bank.beta.setZero();
    bank.beta(2) = 1.0;
    BankMmd bm = mmd2_bank(bank, x, y);
    CHECK(bm.combined ==
          doctest::Approx(mmd2_unbiased(bank.kernels[2], x, y)).epsilon(1e-12));
}

TEST_CASE("mmd2_bank: uniform weights average the per-kernel estimates") {
    Rng rng(16);
    Matrix x = rand_mat(rng, 10, 3);
    Matrix y = rand_mat(rng, 10, 3, 1.2);
    KernelBank bank = KernelBank::default_bank();
    REQUIRE(bank.size() == 18);
    BankMmd bm = mmd2_bank(bank, x, y);
    CHECK(bm.combined == doctest::Approx(bm.m_hat.mean()).epsilon(1e-12));
}

TEST_CASE("mmd2_bank: compositional over two kernels") {
    Rng rng(17);
    Matrix x = rand_mat(rng, 7, 2);
    Matrix y = rand_mat(rng, 7, 2, 0.8, 0.3);
    KernelBank bank;
    bank.kernels = {RbfKernel{0.3}, RbfKernel{1.7}};
    bank.beta = Vector(2);
    bank.beta << 0.4, 0.6;
    BankMmd bm = mmd2_bank(bank, x, y);
    double direct = 0.4 * mmd2_unbiased(bank.kernels[0], x, y) +
                    0.6 * mmd2_unbiased(bank.kernels[1], x, y);
    CHECK(std::abs(bm.combined - direct) <= 1e-12);
}

TEST_CASE("default bank: 18 bandwidths on the 2^{-3.5 + 0.25 j} ladder") {
    KernelBank bank = KernelBank::default_bank();
    REQUIRE(bank.size() == 18);
    CHECK(bank.kernels.front().gamma == doctest::Approx(std::pow(2.0, -3.5)).epsilon(1e-15));
    CHECK(bank.kernels[4].gamma == doctest::Approx(std::pow(2.0, -2.5)).epsilon(1e-15));
    CHECK(bank.kernels.back().gamma == doctest::Approx(std::pow(2.0, 0.75)).epsilon(1e-15));
    KernelBank five = KernelBank::fixed_uniform(5);
    REQUIRE(five.size() == 5);
    CHECK(five.beta(0) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(five.kernels[4].gamma == doctest::Approx(std::pow(2.0, -2.5)).epsilon(1e-15));
}

TEST_CASE("covariance_qk: d=1 equals the sample variance of the h-statistic") {
    Rng rng(18);
    Matrix x = rand_mat(rng, 9, 3);  // odd count: trailing sample dropped
    Matrix y = rand_mat(rng, 9, 3, 1.1);
    KernelBank bank = KernelBank::default_bank(1);
    Matrix q = covariance_qk(bank, x, y);
    REQUIRE(q.rows() == 1);
    CHECK(q(0, 0) >= 0.0);
    Matrix qn = oracles::naive_covariance_qk(bank, x, y);
    CHECK(q(0, 0) == doctest::Approx(qn(0, 0)).epsilon(1e-12));
}

TEST_CASE("covariance_qk: duplicated kernels give identical entries") {
    Rng rng(19);
    Matrix x = rand_mat(rng, 8, 2);
    Matrix y = rand_mat(rng, 8, 2, 0.9, 0.4);
    KernelBank bank;
    bank.kernels = {RbfKernel{0.8}, RbfKernel{0.8}};
    bank.beta = Vector::Constant(2, 0.5);
    Matrix q = covariance_qk(bank, x, y);
    CHECK(q(0, 0) == doctest::Approx(q(0, 1)).epsilon(1e-14));
    CHECK(q(0, 0) == doctest::Approx(q(1, 1)).epsilon(1e-14));
}

TEST_CASE("covariance_qk: symmetric and PSD up to round-off") {
    Rng rng(20);
    Matrix x = rand_mat(rng, 12, 5);
    Matrix y = rand_mat(rng, 12, 5, 1.3, 0.2);
    Matrix q = covariance_qk(KernelBank::default_bank(7), x, y);
    CHECK((q - q.transpose()).cwiseAbs().maxCoeff() == 0.0);
    Eigen::SelfAdjointEigenSolver<Matrix> es(q);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);
    CHECK_THROWS_AS(covariance_qk(KernelBank::default_bank(3), x.topRows(3), y.topRows(3)),
                    DomainError);
}

TEST_CASE("mmd_variance: identical samples return exactly the regularizer") {
    Rng rng(21);
    Matrix x = rand_mat(rng, 8, 3);
    CHECK(mmd_variance(RbfKernel{0.9}, x, x, 1e-8) == 1e-8);
    Matrix y = rand_mat(rng, 8, 3, 2.0);
    CHECK(mmd_variance(RbfKernel{0.9}, x, y, 1e-8) >= 1e-8);
}

TEST_CASE("mmd_variance: matches the naive per-sample h-mean computation") {
    Rng rng(22);
    Matrix x = rand_mat(rng, 8, 4);
    Matrix y = rand_mat(rng, 8, 4, 1.4, 0.3);
    RbfKernel k{0.6};
    CHECK(std::abs(mmd_variance(k, x, y, 1e-8) -
                   oracles::naive_mmd_variance(k, x, y, 1e-8)) <= 1e-10);
}

TEST_CASE("cosine penalty: aligned, antipodal, orthogonal and zero rows") {
    Matrix a(1, 2), b(1, 2);
    a << 1.0, 0.0;
    b << 1.0, 0.0;
    CHECK(cosine_penalty(a, a) == doctest::Approx(0.0));
    b << -1.0, 0.0;
    CHECK(cosine_penalty(a, b) == doctest::Approx(2.0));
    b << 0.0, 1.0;
    CHECK(cosine_penalty(a, b) == doctest::Approx(1.0));
    b << 0.0, 0.0;
    CHECK(cosine_penalty(a, b) == doctest::Approx(1.0));
    Matrix c(1, 3);
    CHECK_THROWS_AS(cosine_penalty(a, c), ShapeError);
}

TEST_CASE("deep kernel: x = y evaluates to 1 for any state") {
    Rng rng(23);
    DeepKernelState s = DeepKernelState::create(3, 5, 3, rng);
    s.eps_raw = 0.7;
    s.log_gamma_k = 0.4;
    s.log_gamma_q = -0.3;
    Matrix x = rand_mat(rng, 4, 3);
    Matrix g = deep_kernel_eval(s, x, x);
    CHECK((g.diagonal().array() - 1.0).abs().maxCoeff() <= 1e-12);
    CHECK(g.minCoeff() > 0.0);
    CHECK(g.maxCoeff() <= 1.0 + 1e-12);
}

TEST_CASE("deep kernel: eps near 1 reduces to the safeguard kernel") {
    Rng rng(24);
    DeepKernelState s = DeepKernelState::create(3, 5, 2, rng);
    s.eps_raw = 30.0;  // sigmoid ~ 1
    Matrix x = rand_mat(rng, 5, 3);
    Matrix y = rand_mat(rng, 5, 3, 1.2);
    Matrix g = deep_kernel_eval(s, x, y);
    Matrix q = gram(RbfKernel{s.gamma_q()}, x, y);
    CHECK((g - q).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("deep kernel: constant featurizer leaves the closed form") {
    Rng rng(25);
    DeepKernelState s = DeepKernelState::create(2, 4, 2, rng);
    s.featurizer = ModelWeights(s.featurizer_spec);  // zero weights, phi constant
    s.eps_raw = 0.0;                                 // eps = 0.5
    s.log_gamma_q = std::log(0.8);
    Matrix x(1, 2), y(1, 2);
    x << 0.3, -0.2;
    y << -0.5, 0.9;
    double expect = 0.5 + 0.5 * std::exp(-0.8 * (x - y).squaredNorm());
    CHECK(deep_kernel_eval(s, x, y)(0, 0) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("bank MMD gradient w.r.t. local features matches finite differences") {
    Rng rng(26);
    Matrix x = rand_mat(rng, 6, 3);
    Matrix y = rand_mat(rng, 6, 3, 1.1, 0.2);
    KernelBank bank = KernelBank::default_bank(4);
    ValueGradX vg = bank_mmd2_grad_x(bank, x, y);
    std::vector<double> flat(x.data(), x.data() + x.size());
    std::vector<double> grad(vg.dx.data(), vg.dx.data() + vg.dx.size());
    auto f = [&](const std::vector<double>& p) {
        Matrix xp = Eigen::Map<const Matrix>(p.data(), 6, 3);
        return mmd2_bank(bank, xp, y).combined;
    };
    CHECK(oracles::max_rel_error_fd(f, flat, grad, 1e-6) <= 1e-5);
}

TEST_CASE("deep MMD gradient w.r.t. local features matches finite differences") {
    Rng rng(27);
    DeepKernelState s = DeepKernelState::create(3, 4, 2, rng);
    s.eps_raw = 0.2;
    Matrix x = rand_mat(rng, 6, 3);
    Matrix y = rand_mat(rng, 6, 3, 1.2, 0.4);
    ValueGradX vg = deep_mmd2_grad_x(s, x, y);
    CHECK(vg.value == doctest::Approx(mmd2_deep(s, x, y)).epsilon(1e-12));
    std::vector<double> flat(x.data(), x.data() + x.size());
    std::vector<double> grad(vg.dx.data(), vg.dx.data() + vg.dx.size());
    auto f = [&](const std::vector<double>& p) {
        Matrix xp = Eigen::Map<const Matrix>(p.data(), 6, 3);
        return mmd2_deep(s, xp, y);
    };
    CHECK(oracles::max_rel_error_fd(f, flat, grad, 1e-6) <= 1e-5);
}

TEST_CASE("monotone separation: MMD grows with Gaussian mean shift") {
    // Mean accumulated over 20 seeds at n = 200 in R^5; the uniform-weight
    // default bank must order the shifts 0 < 0.5 < 1.0 < 2.0.
    const std::vector<double> shifts{0.0, 0.5, 1.0, 2.0};
    KernelBank bank = KernelBank::default_bank();
    std::vector<double> means(shifts.size(), 0.0);
    for (int seed = 0; seed < 20; ++seed) {
        Rng rng(3000 + seed);
        Matrix x = rand_mat(rng, 200, 5);
        Matrix noise = rand_mat(rng, 200, 5);
        for (size_t si = 0; si < shifts.size(); ++si) {
            Matrix y = noise.array() + shifts[si];
            means[si] += mmd2_bank(bank, x, y).combined / 20.0;
        }
    }
    for (size_t si = 1; si < shifts.size(); ++si) CHECK(means[si] >= means[si - 1]);
}

TEST_CASE("standardize_pair: pooled stats go to zero mean, unit variance") {
    Rng rng(28);
    Matrix x = rand_mat(rng, 30, 4, 2.0, 1.0);
    Matrix y = rand_mat(rng, 30, 4, 2.0, -1.0);
    standardize_pair(x, y);
    Eigen::RowVectorXd mean = (x.colwise().sum() + y.colwise().sum()) / 60.0;
    CHECK(mean.cwiseAbs().maxCoeff() <= 1e-12);
}
