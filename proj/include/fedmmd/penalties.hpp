#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "fedmmd/mkmmd.hpp"
#include "fedmmd/mmdd.hpp"

namespace fedmmd {

enum class FeatureKind { none, cosine, mkmmd, mmdd, mkmmd_fixed_uniform };

struct ScheduleConfig {
    enum class Kind { every_step, every_k_steps };
    Kind kind = Kind::every_k_steps;
    int k = 20;
    int z_batches = 50;
};

// Local-loss augmentation: task loss + (lambda/2)|w - wbar|^2 + mu * d(features).
// `depth` counts latent attachment points from the deepest one.
struct PenaltyConfig {
    double lambda = 0.0;
    double mu = 0.0;
    FeatureKind feature_kind = FeatureKind::none;
    int fixed_r = 18;  // bank size for mkmmd_fixed_uniform
    int depth = 1;
    ScheduleConfig schedule;
    MmddConfig mmdd;
    MkmmdOptions mkmmd;
    bool standardize_features = false;

    bool feature_active() const { return feature_kind != FeatureKind::none && mu != 0.0; }
    bool uses_kernel_updates() const {
        return feature_kind == FeatureKind::mkmmd || feature_kind == FeatureKind::mmdd;
    }
};

struct PenaltyEval {
    double value = 0.0;
    ModelWeights grads;
};

// |w - ref|_2^2 over the full flat weight vector; gradient 2(w - ref).
PenaltyEval weight_drift(const ModelWeights& w, const ModelWeights& ref);

// Per-attachment trainable measure state. `bank` backs mkmmd and the fixed
// uniform ablation; `deep` backs mmdd. Cosine needs no state.
struct AttachmentKernels {
    KernelBank bank;
    std::optional<DeepKernelTrainer> deep;
};

std::vector<AttachmentKernels> make_attachment_kernels(const PenaltyConfig& cfg,
                                                       const MlpSpec& model, Rng& rng);

// Feature-drift value plus upstream gradients at each constrained latent, for
// fusing into a single model backward pass. `latents_ref` is treated as
// constant. Latents are indexed as in mlp_forward's latents output.
struct FeatureDriftTerms {
    double value = 0.0;
    std::vector<std::pair<int, Matrix>> dlatents;
};

FeatureDriftTerms feature_drift_terms(const PenaltyConfig& cfg, const MlpSpec& model,
                                      const std::vector<Matrix>& latents_local,
                                      const std::vector<Matrix>& latents_ref,
                                      std::vector<AttachmentKernels>& kernels);

// Standalone feature-drift evaluation producing model-shaped gradients
// (classifier segment exactly zero).
PenaltyEval feature_drift(const PenaltyConfig& cfg, const MlpSpec& model, const ModelWeights& w,
                          const Matrix& batch, const ModelWeights& ref,
                          std::vector<AttachmentKernels>& kernels);

struct LossGrad {
    double loss = 0.0;
    ModelWeights grads;
};

// total = task + (lambda/2) * weight_pen + mu * feature_pen, gradients
// superposed. Penalty evals carry unscaled values/gradients.
LossGrad compose(const PenaltyConfig& cfg, const LossGrad& task, const PenaltyEval& weight_pen,
                 const PenaltyEval& feature_pen);

}  // namespace fedmmd
