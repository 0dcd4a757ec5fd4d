#include <doctest.h>

#include <cmath>

#include "fedmmd/penalties.hpp"
#include "fedmmd/selfcheck.hpp"

using namespace fedmmd;

namespace {

Matrix rand_mat(Rng& rng, int r, int c, double scale = 1.0, double shift = 0.0) {
    Matrix m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = shift + scale * rng.normal();
    return m;
}

struct Fixture {
    MlpSpec spec = MlpSpec::task_net(6, 4, 3);
    ModelWeights w, ref;
    Matrix batch;
    Fixture() : w(spec), ref(spec) {
        Rng rng(77);
        w.init_uniform_fan_in(rng);
        ref.init_uniform_fan_in(rng);
        batch = rand_mat(rng, 8, 6);
    }
};

}  // namespace

TEST_CASE("weight_drift: zero at the reference, unit at unit displacement") {
    Fixture fx;
    PenaltyEval same = weight_drift(fx.w, fx.w);
    CHECK(same.value == 0.0);
    CHECK(same.grads.as_vector().cwiseAbs().maxCoeff() == 0.0);

    ModelWeights shifted = fx.ref;
    Vector dir = Vector::Zero(shifted.size());
    dir(3) = 1.0;  // unit vector displacement
    shifted.as_vector() += dir;
    PenaltyEval unit = weight_drift(shifted, fx.ref);
    CHECK(unit.value == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(unit.grads.as_vector()(3) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("weight_drift: gradient matches finite differences") {
    Fixture fx;
    PenaltyEval pe = weight_drift(fx.w, fx.ref);
    std::vector<double> flat(fx.w.raw().begin(), fx.w.raw().end());
    std::vector<double> analytic(pe.grads.raw().begin(), pe.grads.raw().end());
    auto f = [&](const std::vector<double>& p) {
        ModelWeights wp = fx.w;
        wp.raw().assign(p.begin(), p.end());
        return weight_drift(wp, fx.ref).value;
    };
    double worst = oracles::max_rel_error_fd(f, flat, analytic, 1e-7);
    CHECK(worst <= 1e-6);
}

TEST_CASE("weight_drift: shape mismatch throws") {
    Fixture fx;
    ModelWeights other(MlpSpec::task_net(6, 5, 3));
    CHECK_THROWS_AS(weight_drift(fx.w, other), ShapeError);
}

TEST_CASE("feature_drift: identical latents with cosine give zero") {
    Fixture fx;
    PenaltyConfig cfg;
    cfg.mu = 1.0;
    cfg.feature_kind = FeatureKind::cosine;
    std::vector<AttachmentKernels> ks;
    PenaltyEval pe = feature_drift(cfg, fx.spec, fx.w, fx.batch, fx.w, ks);
    CHECK(pe.value == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("feature_drift: depth 1 equals the direct measure on the final latent") {
    Fixture fx;
    PenaltyConfig cfg;
    cfg.mu = 1.0;
    cfg.feature_kind = FeatureKind::cosine;
    cfg.depth = 1;
    std::vector<AttachmentKernels> ks;
    PenaltyEval pe = feature_drift(cfg, fx.spec, fx.w, fx.batch, fx.ref, ks);
    std::vector<Matrix> ll, lr;
    mlp_forward(fx.spec, fx.w, fx.batch, nullptr, &ll);
    mlp_forward(fx.spec, fx.ref, fx.batch, nullptr, &lr);
    CHECK(pe.value == doctest::Approx(cosine_penalty(ll.back(), lr.back())).epsilon(1e-12));
}

TEST_CASE("feature_drift: fixed uniform bank equals mkmmd with beta = 1/r") {
    Fixture fx;
    Rng rng(78);
    std::vector<Matrix> ll, lr;
    mlp_forward(fx.spec, fx.w, fx.batch, nullptr, &ll);
    mlp_forward(fx.spec, fx.ref, fx.batch, nullptr, &lr);

    PenaltyConfig fixed;
    fixed.mu = 1.0;
    fixed.feature_kind = FeatureKind::mkmmd_fixed_uniform;
    fixed.fixed_r = 18;
    Rng krng(1);
    auto ks_fixed = make_attachment_kernels(fixed, fx.spec, krng);
    FeatureDriftTerms a = feature_drift_terms(fixed, fx.spec, ll, lr, ks_fixed);

    PenaltyConfig mk;
    mk.mu = 1.0;
    mk.feature_kind = FeatureKind::mkmmd;
    Rng krng2(1);
    auto ks_mk = make_attachment_kernels(mk, fx.spec, krng2);  // default uniform weights
    FeatureDriftTerms b = feature_drift_terms(mk, fx.spec, ll, lr, ks_mk);

    CHECK(a.value == doctest::Approx(b.value).epsilon(1e-12));
}

TEST_CASE("feature_drift: depth beyond the attachment points is a config error") {
    Fixture fx;
    PenaltyConfig cfg;
    cfg.mu = 1.0;
    cfg.feature_kind = FeatureKind::cosine;
    cfg.depth = 2;  // task_net has one latent
    std::vector<Matrix> ll, lr;
    mlp_forward(fx.spec, fx.w, fx.batch, nullptr, &ll);
    mlp_forward(fx.spec, fx.ref, fx.batch, nullptr, &lr);
    std::vector<AttachmentKernels> ks;
    CHECK_THROWS_AS(feature_drift_terms(cfg, fx.spec, ll, lr, ks), ConfigError);
}

TEST_CASE("feature_drift: multi-depth sums measures over deep attachments") {
    Rng rng(79);
    MlpSpec spec = MlpSpec::featurizer(5, 4, 3);  // two latent attachment points
    spec.layers.back().act = Activation::identity;
    ModelWeights w(spec), ref(spec);
    w.init_uniform_fan_in(rng);
    ref.init_uniform_fan_in(rng);
    Matrix batch = rand_mat(rng, 6, 5);
    std::vector<Matrix> ll, lr;
    mlp_forward(spec, w, batch, nullptr, &ll);
    mlp_forward(spec, ref, batch, nullptr, &lr);
    REQUIRE(ll.size() == 2);

    PenaltyConfig cfg;
    cfg.mu = 1.0;
    cfg.feature_kind = FeatureKind::cosine;
    cfg.depth = 2;
    std::vector<AttachmentKernels> ks;
    FeatureDriftTerms terms = feature_drift_terms(cfg, spec, ll, lr, ks);
    double expect = cosine_penalty(ll[1], lr[1]) + cosine_penalty(ll[0], lr[0]);
    CHECK(terms.value == doctest::Approx(expect).epsilon(1e-12));
    CHECK(terms.dlatents.size() == 2);
}

TEST_CASE("feature penalties put exactly zero gradient on the classifier") {
    Fixture fx;
    for (FeatureKind kind :
         {FeatureKind::cosine, FeatureKind::mkmmd, FeatureKind::mmdd}) {
        PenaltyConfig cfg;
        cfg.mu = 1.0;
        cfg.feature_kind = kind;
        Rng krng(2);
        auto ks = make_attachment_kernels(cfg, fx.spec, krng);
        PenaltyEval pe = feature_drift(cfg, fx.spec, fx.w, fx.batch, fx.ref, ks);
        for (double g : pe.grads.classifier_span()) CHECK(g == 0.0);
    }
}

TEST_CASE("feature_drift leaves the reference side untouched") {
    Fixture fx;
    PenaltyConfig cfg;
    cfg.mu = 1.0;
    cfg.feature_kind = FeatureKind::mkmmd;
    Rng krng(3);
    auto ks = make_attachment_kernels(cfg, fx.spec, krng);
    ModelWeights ref_copy = fx.ref;
    (void)feature_drift(cfg, fx.spec, fx.w, fx.batch, fx.ref, ks);
    CHECK(fx.ref.raw() == ref_copy.raw());
}

TEST_CASE("compose: zero weights reproduce the task loss, superposition is linear") {
    Fixture fx;
    std::vector<int> labels{0, 1, 2, 0, 1, 2, 0, 1};
    auto [tl, tg] = loss_and_grad(fx.spec, fx.w, fx.batch, labels);
    LossGrad task{tl, tg};
    PenaltyEval wpen = weight_drift(fx.w, fx.ref);

    PenaltyConfig cfg;  // lambda = mu = 0
    std::vector<AttachmentKernels> ks;
    PenaltyConfig cosine_cfg;
    cosine_cfg.mu = 1.0;
    cosine_cfg.feature_kind = FeatureKind::cosine;
    PenaltyEval fpen = feature_drift(cosine_cfg, fx.spec, fx.w, fx.batch, fx.ref, ks);

    LossGrad plain = compose(cfg, task, wpen, fpen);
    CHECK(plain.loss == task.loss);
    CHECK(plain.grads.raw() == task.grads.raw());

    PenaltyConfig both;
    both.lambda = 0.3;
    both.mu = 0.7;
    both.feature_kind = FeatureKind::cosine;
    LossGrad combined = compose(both, task, wpen, fpen);

    PenaltyConfig lonly;
    lonly.lambda = 0.3;
    LossGrad lg = compose(lonly, task, wpen, fpen);
    PenaltyConfig monly;
    monly.mu = 0.7;
    monly.feature_kind = FeatureKind::cosine;
    LossGrad mg = compose(monly, task, wpen, fpen);

    CHECK(combined.loss ==
          doctest::Approx(lg.loss + mg.loss - task.loss).epsilon(1e-12));
    Vector lhs = combined.grads.as_vector();
    Vector rhs = lg.grads.as_vector() + mg.grads.as_vector() - task.grads.as_vector();
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("compose: ditto local objective is task + (lambda/2) weight drift") {
    Fixture fx;
    std::vector<int> labels{0, 1, 2, 0, 1, 2, 0, 1};
    auto [tl, tg] = loss_and_grad(fx.spec, fx.w, fx.batch, labels);
    PenaltyEval wpen = weight_drift(fx.w, fx.ref);
    PenaltyConfig cfg;
    cfg.lambda = 0.1;
    LossGrad out = compose(cfg, {tl, tg}, wpen, PenaltyEval{0.0, ModelWeights{}});
    CHECK(out.loss == doctest::Approx(tl + 0.05 * wpen.value).epsilon(1e-12));
    // gradient contribution is lambda * (w - ref)
    Vector extra = out.grads.as_vector() - tg.as_vector();
    Vector expect = 0.1 * (fx.w.as_vector() - fx.ref.as_vector());
    CHECK((extra - expect).cwiseAbs().maxCoeff() <= 1e-12);
}
