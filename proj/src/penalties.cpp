#include "fedmmd/penalties.hpp"

namespace fedmmd {

PenaltyEval weight_drift(const ModelWeights& w, const ModelWeights& ref) {
    if (!w.same_shape(ref)) throw ShapeError("weight_drift: shape mismatch");
    PenaltyEval out;
    out.grads = w;  // shape template
    auto d = w.as_vector() - ref.as_vector();
    out.value = d.squaredNorm();
    out.grads.as_vector() = 2.0 * d;
    return out;
}

std::vector<AttachmentKernels> make_attachment_kernels(const PenaltyConfig& cfg,
                                                       const MlpSpec& model, Rng& rng) {
    std::vector<AttachmentKernels> ks;
    if (!cfg.feature_active() || cfg.feature_kind == FeatureKind::cosine) return ks;
    auto attach = model.attachments_deepest_first();
    if (cfg.depth > static_cast<int>(attach.size()))
        throw ConfigError("penalty depth exceeds the model's latent attachment points");
    for (int i = 0; i < cfg.depth; ++i) {
        AttachmentKernels a;
        a.bank = cfg.feature_kind == FeatureKind::mkmmd_fixed_uniform
                     ? KernelBank::fixed_uniform(cfg.fixed_r)
                     : KernelBank::default_bank();
        if (cfg.feature_kind == FeatureKind::mmdd) {
            int dim = model.layers[attach[i]].out;
            a.deep.emplace(cfg.mmdd, dim, Rng::derive({rng.next_u64(), 0xDEEBull, (uint64_t)i}));
        }
        ks.push_back(std::move(a));
    }
    return ks;
}

FeatureDriftTerms feature_drift_terms(const PenaltyConfig& cfg, const MlpSpec& model,
                                      const std::vector<Matrix>& latents_local,
                                      const std::vector<Matrix>& latents_ref,
                                      std::vector<AttachmentKernels>& kernels) {
    FeatureDriftTerms out;
    if (!cfg.feature_active()) return out;
    auto attach = model.attachments_deepest_first();
    if (cfg.depth > static_cast<int>(attach.size()))
        throw ConfigError("feature_drift: depth exceeds attachment points");
    if (latents_local.size() != latents_ref.size() ||
        static_cast<int>(latents_local.size()) < cfg.depth)
        throw ShapeError("feature_drift: latent lists too short");

    for (int i = 0; i < cfg.depth; ++i) {
        const int li = attach[i];
        Matrix fl = latents_local[li];
        Matrix fg = latents_ref[li];
        if (cfg.standardize_features) standardize_pair(fl, fg);
        ValueGradX vg;
        switch (cfg.feature_kind) {
            case FeatureKind::cosine:
                vg = cosine_penalty_grad(fl, fg);
                break;
            case FeatureKind::mkmmd:
            case FeatureKind::mkmmd_fixed_uniform:
                vg = bank_mmd2_grad_x(kernels.at(i).bank, fl, fg);
                break;
            case FeatureKind::mmdd: {
                auto& trainer = kernels.at(i).deep;
                if (!trainer) throw ConfigError("feature_drift: missing deep kernel state");
                trainer->ensure_initialized(fl, fg);
                vg = deep_mmd2_grad_x(trainer->state(), fl, fg);
                break;
            }
            case FeatureKind::none:
                continue;
        }
        if (cfg.standardize_features) {
            // Standardization was applied to copies; the gradient w.r.t. the
            // raw local latents picks up the per-dimension scaling only (the
            // pooled statistics are treated as constants of the measure).
            // Recompute the scaling to map the gradient back.
            Matrix fl0 = latents_local[li];
            Matrix fg0 = latents_ref[li];
            const double ntot = static_cast<double>(fl0.rows() + fg0.rows());
            Eigen::RowVectorXd mean = (fl0.colwise().sum() + fg0.colwise().sum()) / ntot;
            Eigen::RowVectorXd var = ((fl0.rowwise() - mean).array().square().colwise().sum() +
                                      (fg0.rowwise() - mean).array().square().colwise().sum()) /
                                     ntot;
            Eigen::RowVectorXd sd = var.array().sqrt().max(1e-12);
            vg.dx = vg.dx.array().rowwise() / sd.array();
        }
        out.value += vg.value;
        out.dlatents.emplace_back(li, std::move(vg.dx));
    }
    return out;
}

PenaltyEval feature_drift(const PenaltyConfig& cfg, const MlpSpec& model, const ModelWeights& w,
                          const Matrix& batch, const ModelWeights& ref,
                          std::vector<AttachmentKernels>& kernels) {
    ForwardCache cache;
    std::vector<Matrix> latents_local, latents_ref;
    Matrix logits = mlp_forward(model, w, batch, &cache, &latents_local);
    mlp_forward(model, ref, batch, nullptr, &latents_ref);
    FeatureDriftTerms terms = feature_drift_terms(cfg, model, latents_local, latents_ref, kernels);
    PenaltyEval out;
    out.value = terms.value;
    Matrix zero_dlogits = Matrix::Zero(logits.rows(), logits.cols());
    out.grads = mlp_backward(model, w, cache, zero_dlogits, terms.dlatents);
    return out;
}

LossGrad compose(const PenaltyConfig& cfg, const LossGrad& task, const PenaltyEval& weight_pen,
                 const PenaltyEval& feature_pen) {
    LossGrad out;
    out.loss = task.loss + 0.5 * cfg.lambda * weight_pen.value + cfg.mu * feature_pen.value;
    out.grads = task.grads;
    if (cfg.lambda != 0.0) {
        if (!weight_pen.grads.same_shape(out.grads))
            throw ShapeError("compose: weight penalty shape mismatch");
        out.grads.as_vector() += (0.5 * cfg.lambda) * weight_pen.grads.as_vector();
    }
    if (cfg.mu != 0.0 && feature_pen.grads.size() > 0) {
        if (!feature_pen.grads.same_shape(out.grads))
            throw ShapeError("compose: feature penalty shape mismatch");
        out.grads.as_vector() += cfg.mu * feature_pen.grads.as_vector();
    }
    return out;
}

}  // namespace fedmmd
