#include "fedmmd/mmdd.hpp"

#include <cmath>

namespace fedmmd {

RatioObjective ratio_objective(const DeepKernelState& state, const Matrix& x, const Matrix& y,
                               double variance_reg, const Matrix* dq_full) {
    require_same_cols(x, y, "ratio_objective");
    const auto n = x.rows();
    if (y.rows() != n) throw DomainError("ratio_objective: paired sample counts required");
    if (n < 4) throw DomainError("ratio_objective: need at least 4 samples per side");
    if (x.cols() != state.featurizer_spec.input_dim())
        throw ShapeError("ratio_objective: featurizer input dim mismatch");
    if (!(variance_reg > 0.0)) throw DomainError("ratio_objective: regularizer must be positive");

    const double e = state.eps();
    const double gk = state.gamma_k();
    const double gq = state.gamma_q();
    const double nn = static_cast<double>(n);
    const double denom = nn * (nn - 1.0);

    Matrix z(2 * n, x.cols());
    z.topRows(n) = x;
    z.bottomRows(n) = y;

    ForwardCache cache;
    Matrix phi = mlp_forward(state.featurizer_spec, state.featurizer, z, &cache);

    Matrix dfeat = pairwise_sqdist(phi, phi);
    Matrix dq;
    const Matrix* dq_ptr = dq_full;
    if (!dq_ptr) {
        dq = pairwise_sqdist(z, z);
        dq_ptr = &dq;
    } else if (dq_ptr->rows() != 2 * n || dq_ptr->cols() != 2 * n) {
        throw ShapeError("ratio_objective: dq_full must be 2n x 2n");
    }

    Matrix kf = (-gk * dfeat.array()).exp();
    Matrix kq = (-gq * dq_ptr->array()).exp();

    auto kf_xx = kf.topLeftCorner(n, n);
    auto kf_yy = kf.bottomRightCorner(n, n);
    auto kf_xy = kf.topRightCorner(n, n);
    auto kq_xx = kq.topLeftCorner(n, n);
    auto kq_yy = kq.bottomRightCorner(n, n);
    auto kq_xy = kq.topRightCorner(n, n);

    auto offsum = [](const auto& m) { return m.sum() - m.diagonal().sum(); };

    const double mixf = offsum(kf_xx) + offsum(kf_yy) - 2.0 * offsum(kf_xy);
    const double mixq = offsum(kq_xx) + offsum(kq_yy) - 2.0 * offsum(kq_xy);
    const double mmd2 = ((1.0 - e) * mixf + e * mixq) / denom;

    // H = Kxx + Kyy - Kxy - Kxy^T with K = (1-e)Kf + e*Kq, diagonal included.
    Matrix h = (1.0 - e) * (kf_xx + kf_yy - kf_xy - kf_xy.transpose()) +
               e * (kq_xx + kq_yy - kq_xy - kq_xy.transpose());
    Vector r = h.rowwise().sum();
    const double s_total = r.sum();
    const double v1 = r.squaredNorm() / (nn * nn * nn);
    const double v2 = s_total / (nn * nn);
    const double sigma2 = 4.0 * (v1 - v2 * v2);
    const double variance = std::max(sigma2, 0.0) + variance_reg;

    RatioObjective out;
    out.mmd2 = mmd2;
    out.variance = variance;
    out.j = mmd2 / std::sqrt(variance);

    // Upstream coefficients: a1 on the estimator, a2 on the variance (clipped
    // subgradient when the raw variance estimate is negative).
    const double a1 = 1.0 / std::sqrt(variance);
    const double a2 = sigma2 > 0.0 ? -mmd2 / (2.0 * variance * std::sqrt(variance)) : 0.0;

    // dJ/dH_ab depends only on the row: c_a = 8 a2 (r_a / n^3 - S / n^4).
    Vector c = (8.0 * a2) * (r / (nn * nn * nn) - Vector::Constant(n, s_total / (nn * nn * nn * nn)));
    const double e_off = a1 / denom;

    // P_ab = c_a + c_b + 2*e_off (off-diagonal), P_aa = 2*c_a. This is the
    // symmetrized block upstream: same-block pairs carry +P, cross pairs -P.
    Matrix p = c.replicate(1, n) + c.transpose().replicate(n, 1);
    p.array() += 2.0 * e_off;
    p.diagonal().array() -= 2.0 * e_off;

    // Scalar parameter gradients. Sums over read entries expressed through P:
    // sum_read U .* V = 0.5 * [sum(P .* Vxx) + sum(P .* Vyy)] - sum(P .* Vxy)
    // holds for symmetric Vxx, Vyy because U_xx + U_xx^T = P on that block.
    auto mixed_sum = [&](const auto& vxx, const auto& vyy, const auto& vxy) {
        return 0.5 * (p.cwiseProduct(vxx).sum() + p.cwiseProduct(vyy).sum()) -
               p.cwiseProduct(vxy).sum();
    };

    const double d_eps = mixed_sum(kq_xx - kf_xx, kq_yy - kf_yy, kq_xy - kf_xy);
    const double d_eps_raw = d_eps * e * (1.0 - e);

    auto df_xx = dfeat.topLeftCorner(n, n);
    auto df_yy = dfeat.bottomRightCorner(n, n);
    auto df_xy = dfeat.topRightCorner(n, n);
    const double d_log_gk =
        -(1.0 - e) * gk *
        mixed_sum(kf_xx.cwiseProduct(df_xx), kf_yy.cwiseProduct(df_yy), kf_xy.cwiseProduct(df_xy));
    auto dq_xx = dq_ptr->topLeftCorner(n, n);
    auto dq_yy = dq_ptr->bottomRightCorner(n, n);
    auto dq_xy = dq_ptr->topRightCorner(n, n);
    const double d_log_gq =
        -e * gq *
        mixed_sum(kq_xx.cwiseProduct(dq_xx), kq_yy.cwiseProduct(dq_yy), kq_xy.cwiseProduct(dq_xy));

    // Pair weights on the feature-space squared distances. The full 2n x 2n
    // weight matrix has +P.*Kf on the diagonal blocks and -P.*Kf on the cross
    // blocks, scaled by (1-e)(-gk).
    const double scale = (1.0 - e) * (-gk);
    Matrix w(2 * n, 2 * n);
    w.topLeftCorner(n, n) = p.cwiseProduct(kf_xx);
    w.bottomRightCorner(n, n) = p.cwiseProduct(kf_yy);
    w.topRightCorner(n, n) = -p.cwiseProduct(kf_xy);
    w.bottomLeftCorner(n, n) = w.topRightCorner(n, n).transpose();
    w *= scale;

    Vector rw = w.rowwise().sum();
    Matrix dphi(2 * n, phi.cols());
    dphi.noalias() = -2.0 * (w * phi);
    dphi += 2.0 * (rw.asDiagonal() * phi);

    ModelWeights fgrads =
        mlp_backward(state.featurizer_spec, state.featurizer, cache, dphi);

    out.grads.assign(state.param_count(), 0.0);
    std::copy(fgrads.raw().begin(), fgrads.raw().end(), out.grads.begin());
    out.grads[out.grads.size() - 3] = d_eps_raw;
    out.grads[out.grads.size() - 2] = d_log_gk;
    out.grads[out.grads.size() - 1] = d_log_gq;
    return out;
}

DeepKernelTrainer::DeepKernelTrainer(const MmddConfig& cfg, int input_dim, Rng init_rng)
    : cfg_(cfg),
      state_(DeepKernelState::create(input_dim, cfg.hidden, cfg.depth, init_rng)),
      opt_(Optimizer::adamw(AdamWConfig{cfg.lr, 0.9, 0.999, 1e-8, 0.0},
                            state_.param_count())) {}

void DeepKernelTrainer::ensure_initialized(const Matrix& x, const Matrix& y) {
    if (initialized_) return;
    Matrix z(x.rows() + y.rows(), x.cols());
    z.topRows(x.rows()) = x;
    z.bottomRows(y.rows()) = y;
    // Median heuristic, each bandwidth in its own space.
    double med_q = std::max(median_pairwise_sqdist(z), 1e-12);
    Matrix phi = mlp_forward(state_.featurizer_spec, state_.featurizer, z);
    double med_k = std::max(median_pairwise_sqdist(phi), 1e-12);
    state_.log_gamma_q = std::log(1.0 / med_q);
    state_.log_gamma_k = std::log(1.0 / med_k);
    initialized_ = true;
}

double DeepKernelTrainer::train(const Matrix& x, const Matrix& y, int steps) {
    if (steps < 1) throw DomainError("DeepKernelTrainer::train: steps must be >= 1");
    ensure_initialized(x, y);
    const auto n = x.rows();
    Matrix z(2 * n, x.cols());
    z.topRows(n) = x;
    z.bottomRows(n) = y;
    Matrix dq = pairwise_sqdist(z, z);

    std::vector<double> flat = state_.flatten();
    for (int s = 0; s < steps; ++s) {
        RatioObjective ro = ratio_objective(state_, x, y, cfg_.variance_reg, &dq);
        last_j_ = ro.j;
        for (auto& g : ro.grads) g = -g;  // ascend
        opt_.step(flat, ro.grads);
        state_.unflatten(flat);
    }
    return last_j_;
}

}  // namespace fedmmd
