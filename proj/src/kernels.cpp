#include "fedmmd/kernels.hpp"

#include <algorithm>

namespace fedmmd {

KernelBank KernelBank::default_bank(int d) {
    if (d < 1) throw DomainError("KernelBank: need d >= 1");
    KernelBank b;
    for (int j = 0; j < d; ++j)
        b.kernels.push_back({std::pow(2.0, -3.5 + 0.25 * j)});
    b.beta = Vector::Constant(d, 1.0 / d);
    return b;
}

KernelBank KernelBank::fixed_uniform(int r) {
    if (r < 1 || r > kDefaultSize)
        throw DomainError("KernelBank::fixed_uniform: r must be in [1, 18]");
    return default_bank(r);
}

void KernelBank::validate() const {
    if (kernels.empty()) throw DomainError("KernelBank: empty");
    if (beta.size() != static_cast<Eigen::Index>(kernels.size()))
        throw ShapeError("KernelBank: beta size mismatch");
    for (const auto& k : kernels)
        if (!(k.gamma > 0.0)) throw DomainError("KernelBank: gamma must be positive");
    if ((beta.array() < 0.0).any()) throw DomainError("KernelBank: negative beta");
}

Matrix gram(const RbfKernel& k, const Matrix& x, const Matrix& y) {
    if (!(k.gamma > 0.0)) throw DomainError("gram: gamma must be positive");
    return (-k.gamma * pairwise_sqdist(x, y).array()).exp();
}

GramBlocks gram_blocks(const RbfKernel& k, const Matrix& x, const Matrix& y) {
    return {gram(k, x, x), gram(k, y, y), gram(k, x, y)};
}

namespace {

void check_paired(const Matrix& kxx, const Matrix& kyy, const Matrix& kxy, int min_n) {
    const auto n = kxx.rows();
    if (kxx.cols() != n || kyy.rows() != n || kyy.cols() != n || kxy.rows() != n ||
        kxy.cols() != n)
        throw ShapeError("mmd: Gram blocks must be square with equal sample counts");
    if (n < min_n)
        throw DomainError("mmd: need at least " + std::to_string(min_n) + " samples per side");
}

void check_inputs(const Matrix& x, const Matrix& y, int min_n) {
    require_same_cols(x, y, "mmd");
    if (x.rows() != y.rows()) throw DomainError("mmd: estimators assume paired sample counts");
    if (x.rows() < min_n)
        throw DomainError("mmd: need at least " + std::to_string(min_n) + " samples per side");
}

}  // namespace

double mmd2_unbiased_from_grams(const Matrix& kxx, const Matrix& kyy, const Matrix& kxy) {
    check_paired(kxx, kyy, kxy, 2);
    const double n = static_cast<double>(kxx.rows());
    const double denom = n * (n - 1.0);
    double sxx = kxx.sum() - kxx.trace();
    double syy = kyy.sum() - kyy.trace();
    double sxy = kxy.sum() - kxy.trace();
    return (sxx + syy - 2.0 * sxy) / denom;
}

double mmd2_unbiased(const RbfKernel& k, const Matrix& x, const Matrix& y) {
    check_inputs(x, y, 2);
    auto g = gram_blocks(k, x, y);
    return mmd2_unbiased_from_grams(g.kxx, g.kyy, g.kxy);
}

double mmd_variance_from_grams(const Matrix& kxx, const Matrix& kyy, const Matrix& kxy,
                               double regularizer) {
    check_paired(kxx, kyy, kxy, 4);
    const auto n = kxx.rows();
    Matrix h = kxx + kyy - kxy - kxy.transpose();
    Vector r = h.rowwise().sum();
    const double nn = static_cast<double>(n);
    double v1 = r.squaredNorm() / (nn * nn * nn);
    double v2 = r.sum() / (nn * nn);
    double sigma2 = 4.0 * (v1 - v2 * v2);
    return std::max(sigma2, 0.0) + regularizer;
}

double mmd_variance(const RbfKernel& k, const Matrix& x, const Matrix& y, double regularizer) {
    check_inputs(x, y, 4);
    auto g = gram_blocks(k, x, y);
    return mmd_variance_from_grams(g.kxx, g.kyy, g.kxy, regularizer);
}

BankMmd mmd2_bank(const KernelBank& bank, const Matrix& x, const Matrix& y) {
    bank.validate();
    check_inputs(x, y, 2);
    Matrix dxx = pairwise_sqdist(x, x);
    Matrix dyy = pairwise_sqdist(y, y);
    Matrix dxy = pairwise_sqdist(x, y);
    const double n = static_cast<double>(x.rows());
    const double denom = n * (n - 1.0);
    BankMmd out;
    out.m_hat.resize(bank.size());
    for (int j = 0; j < bank.size(); ++j) {
        const double g = bank.kernels[j].gamma;
        Matrix kxx = (-g * dxx.array()).exp();
        Matrix kyy = (-g * dyy.array()).exp();
        Matrix kxy = (-g * dxy.array()).exp();
        out.m_hat(j) =
            (kxx.sum() - kxx.trace() + kyy.sum() - kyy.trace() - 2.0 * (kxy.sum() - kxy.trace())) /
            denom;
    }
    out.combined = bank.beta.dot(out.m_hat);
    return out;
}

Vector bank_variances(const KernelBank& bank, const Matrix& x, const Matrix& y,
                      double regularizer) {
    bank.validate();
    check_inputs(x, y, 4);
    Matrix dxx = pairwise_sqdist(x, x);
    Matrix dyy = pairwise_sqdist(y, y);
    Matrix dxy = pairwise_sqdist(x, y);
    Vector out(bank.size());
    for (int j = 0; j < bank.size(); ++j) {
        const double g = bank.kernels[j].gamma;
        Matrix kxx = (-g * dxx.array()).exp();
        Matrix kyy = (-g * dyy.array()).exp();
        Matrix kxy = (-g * dxy.array()).exp();
        out(j) = mmd_variance_from_grams(kxx, kyy, kxy, regularizer);
    }
    return out;
}

Matrix covariance_qk(const KernelBank& bank, const Matrix& x, const Matrix& y) {
    bank.validate();
    check_inputs(x, y, 4);
    const int nq = static_cast<int>(x.rows()) / 2;
    const int d = bank.size();
    // Squared distances of the four pairs in each quadruple.
    Vector d1(nq), d2(nq), d3(nq), d4(nq);
    for (int i = 0; i < nq; ++i) {
        d1(i) = (x.row(2 * i) - x.row(2 * i + 1)).squaredNorm();
        d2(i) = (y.row(2 * i) - y.row(2 * i + 1)).squaredNorm();
        d3(i) = (x.row(2 * i) - y.row(2 * i + 1)).squaredNorm();
        d4(i) = (x.row(2 * i + 1) - y.row(2 * i)).squaredNorm();
    }
    Matrix h(nq, d);
    for (int j = 0; j < d; ++j) {
        const double g = bank.kernels[j].gamma;
        h.col(j) = (-g * d1.array()).exp() + (-g * d2.array()).exp() - (-g * d3.array()).exp() -
                   (-g * d4.array()).exp();
    }
    Eigen::RowVectorXd mean = h.colwise().mean();
    h.rowwise() -= mean;
    Matrix q(d, d);
    q.noalias() = h.transpose() * h / static_cast<double>(nq - 1);
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < a; ++b) q(b, a) = q(a, b);  // exact symmetry
    return q;
}

double cosine_penalty(const Matrix& f_local, const Matrix& f_global) {
    return cosine_penalty_grad(f_local, f_global).value;
}

ValueGradX cosine_penalty_grad(const Matrix& f_local, const Matrix& f_global) {
    require_same_shape(f_local, f_global, "cosine_penalty");
    const auto n = f_local.rows();
    if (n == 0) throw DomainError("cosine_penalty: empty input");
    ValueGradX out;
    out.dx = Matrix::Zero(n, f_local.cols());
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double nl = f_local.row(i).norm();
        double ng = f_global.row(i).norm();
        if (nl == 0.0 || ng == 0.0) {
            total += 1.0;  // similarity defined as 0 for zero rows
            continue;
        }
        double c = f_local.row(i).dot(f_global.row(i)) / (nl * ng);
        total += 1.0 - c;
        out.dx.row(i) =
            -(f_global.row(i) / (nl * ng) - (c / (nl * nl)) * f_local.row(i)) / static_cast<double>(n);
    }
    out.value = total / static_cast<double>(n);
    return out;
}

ValueGradX bank_mmd2_grad_x(const KernelBank& bank, const Matrix& x, const Matrix& y) {
    bank.validate();
    check_inputs(x, y, 2);
    const auto n = x.rows();
    const double denom = static_cast<double>(n) * (n - 1.0);
    Matrix dxx = pairwise_sqdist(x, x);
    Matrix dxy = pairwise_sqdist(x, y);
    Matrix dyy = pairwise_sqdist(y, y);

    // a = sum_j beta_j gamma_j k_j on the xx block, b likewise on the cross
    // block; diagonals do not enter the off-diagonal U-statistic.
    Matrix a = Matrix::Zero(n, n);
    Matrix b = Matrix::Zero(n, n);
    double value = 0.0;
    for (int j = 0; j < bank.size(); ++j) {
        const double g = bank.kernels[j].gamma;
        const double w = bank.beta(j);
        Matrix kxx = (-g * dxx.array()).exp();
        Matrix kyy = (-g * dyy.array()).exp();
        Matrix kxy = (-g * dxy.array()).exp();
        value += w *
                 (kxx.sum() - kxx.trace() + kyy.sum() - kyy.trace() -
                  2.0 * (kxy.sum() - kxy.trace())) /
                 denom;
        if (w != 0.0) {
            a += (w * g) * kxx;
            b += (w * g) * kxy;
        }
    }
    a.diagonal().setZero();
    b.diagonal().setZero();

    // d/dx_c of the off-diagonal sums; see the xx term (read twice, symmetric)
    // and the cross term (read once).
    Vector ra = a.rowwise().sum();
    Vector rb = b.rowwise().sum();
    ValueGradX out;
    out.value = value;
    out.dx = (-4.0 / denom) * (ra.asDiagonal() * x - a * x) +
             (4.0 / denom) * (rb.asDiagonal() * x - b * y);
    out.dx = std::move(out.dx);
    return out;
}

DeepKernelState DeepKernelState::create(int input_dim, int hidden, int depth, Rng& rng) {
    DeepKernelState s;
    s.featurizer_spec = MlpSpec::featurizer(input_dim, hidden, depth);
    s.featurizer = ModelWeights(s.featurizer_spec);
    s.featurizer.init_uniform_fan_in(rng);
    return s;
}

std::vector<double> DeepKernelState::flatten() const {
    std::vector<double> flat(featurizer.raw().begin(), featurizer.raw().end());
    flat.push_back(eps_raw);
    flat.push_back(log_gamma_k);
    flat.push_back(log_gamma_q);
    return flat;
}

void DeepKernelState::unflatten(std::span<const double> flat) {
    if (flat.size() != param_count()) throw ShapeError("DeepKernelState: bad flat size");
    std::copy(flat.begin(), flat.end() - 3, featurizer.raw().begin());
    eps_raw = flat[flat.size() - 3];
    log_gamma_k = flat[flat.size() - 2];
    log_gamma_q = flat[flat.size() - 1];
}

Matrix deep_kernel_eval(const DeepKernelState& state, const Matrix& x, const Matrix& y) {
    Matrix fx = mlp_forward(state.featurizer_spec, state.featurizer, x);
    const double e = state.eps();
    if (&x == &y) {
        Matrix kf = (-state.gamma_k() * pairwise_sqdist(fx, fx).array()).exp();
        Matrix kq = (-state.gamma_q() * pairwise_sqdist(x, x).array()).exp();
        return (1.0 - e) * kf + e * kq;
    }
    Matrix fy = mlp_forward(state.featurizer_spec, state.featurizer, y);
    Matrix kf = (-state.gamma_k() * pairwise_sqdist(fx, fy).array()).exp();
    Matrix kq = (-state.gamma_q() * pairwise_sqdist(x, y).array()).exp();
    return (1.0 - e) * kf + e * kq;
}

GramBlocks deep_gram_blocks(const DeepKernelState& state, const Matrix& x, const Matrix& y) {
    return {deep_kernel_eval(state, x, x), deep_kernel_eval(state, y, y),
            deep_kernel_eval(state, x, y)};
}

double mmd2_deep(const DeepKernelState& state, const Matrix& x, const Matrix& y) {
    check_inputs(x, y, 2);
    auto g = deep_gram_blocks(state, x, y);
    return mmd2_unbiased_from_grams(g.kxx, g.kyy, g.kxy);
}

double mmd_variance_deep(const DeepKernelState& state, const Matrix& x, const Matrix& y,
                         double regularizer) {
    check_inputs(x, y, 4);
    auto g = deep_gram_blocks(state, x, y);
    return mmd_variance_from_grams(g.kxx, g.kyy, g.kxy, regularizer);
}

ValueGradX deep_mmd2_grad_x(const DeepKernelState& state, const Matrix& x, const Matrix& y) {
    check_inputs(x, y, 2);
    if (x.cols() != state.featurizer_spec.input_dim())
        throw ShapeError("deep_mmd2_grad_x: featurizer input dim mismatch");
    const auto n = x.rows();
    const double denom = static_cast<double>(n) * (n - 1.0);
    const double e = state.eps();
    const double gk = state.gamma_k();
    const double gq = state.gamma_q();

    ForwardCache cx;
    Matrix fx = mlp_forward(state.featurizer_spec, state.featurizer, x, &cx);
    Matrix fy = mlp_forward(state.featurizer_spec, state.featurizer, y);

    Matrix kf_xx = (-gk * pairwise_sqdist(fx, fx).array()).exp();
    Matrix kf_yy = (-gk * pairwise_sqdist(fy, fy).array()).exp();
    Matrix kf_xy = (-gk * pairwise_sqdist(fx, fy).array()).exp();
    Matrix kq_xx = (-gq * pairwise_sqdist(x, x).array()).exp();
    Matrix kq_yy = (-gq * pairwise_sqdist(y, y).array()).exp();
    Matrix kq_xy = (-gq * pairwise_sqdist(x, y).array()).exp();

    auto offsum = [](const Matrix& m) { return m.sum() - m.trace(); };
    ValueGradX out;
    out.value = ((1.0 - e) * (offsum(kf_xx) + offsum(kf_yy) - 2.0 * offsum(kf_xy)) +
                 e * (offsum(kq_xx) + offsum(kq_yy) - 2.0 * offsum(kq_xy))) /
                denom;

    // Feature-space part: weights on the squared distances of (phi_x, phi_x)
    // and (phi_x, phi_y) pairs; xx entries are read twice, cross entries once.
    Matrix wf_xx = kf_xx;
    wf_xx.diagonal().setZero();
    Matrix wf_xy = kf_xy;
    wf_xy.diagonal().setZero();
    const double cf = (1.0 - e) * gk;
    Vector rxx = wf_xx.rowwise().sum();
    Vector rxy = wf_xy.rowwise().sum();
    Matrix dfx = (-4.0 * cf / denom) * (rxx.asDiagonal() * fx - wf_xx * fx) +
                 (4.0 * cf / denom) * (rxy.asDiagonal() * fx - wf_xy * fy);
    Matrix dx_feat;
    mlp_backward(state.featurizer_spec, state.featurizer, cx, dfx, {}, &dx_feat);

    // Safeguard part acts on the raw inputs.
    Matrix wq_xx = kq_xx;
    wq_xx.diagonal().setZero();
    Matrix wq_xy = kq_xy;
    wq_xy.diagonal().setZero();
    const double cq = e * gq;
    Vector qxx = wq_xx.rowwise().sum();
    Vector qxy = wq_xy.rowwise().sum();
    out.dx = dx_feat + (-4.0 * cq / denom) * (qxx.asDiagonal() * x - wq_xx * x) +
             (4.0 * cq / denom) * (qxy.asDiagonal() * x - wq_xy * y);
    return out;
}

double median_pairwise_sqdist(const Matrix& z) {
    const auto n = z.rows();
    if (n < 2) throw DomainError("median_pairwise_sqdist: need at least 2 rows");
    Matrix d = pairwise_sqdist(z, z);
    std::vector<double> vals;
    vals.reserve(static_cast<size_t>(n) * (n - 1) / 2);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) vals.push_back(d(i, j));
    size_t mid = vals.size() / 2;
    std::nth_element(vals.begin(), vals.begin() + mid, vals.end());
    return vals[mid];
}

void standardize_pair(Matrix& x, Matrix& y) {
    require_same_cols(x, y, "standardize_pair");
    const double n = static_cast<double>(x.rows() + y.rows());
    Eigen::RowVectorXd mean = (x.colwise().sum() + y.colwise().sum()) / n;
    Eigen::RowVectorXd var =
        ((x.rowwise() - mean).array().square().colwise().sum() +
         (y.rowwise() - mean).array().square().colwise().sum()) /
        n;
    Eigen::RowVectorXd sd = var.array().sqrt().max(1e-12);
    x = (x.rowwise() - mean).array().rowwise() / sd.array();
    y = (y.rowwise() - mean).array().rowwise() / sd.array();
}

}  // namespace fedmmd
