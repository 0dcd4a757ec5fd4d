#include "fedmmd/mlp.hpp"

#include <cmath>

namespace fedmmd {

namespace {

void apply_activation(Activation act, Matrix& m) {
    if (act == Activation::relu) m = m.cwiseMax(0.0);
}

// Gradient through the activation, using the pre-activation values.
void activation_backward(Activation act, const Matrix& pre, Matrix& g) {
    if (act == Activation::relu)
        g = (pre.array() > 0.0).cast<double>() * g.array();
}

}  // namespace

Matrix mlp_forward(const MlpSpec& spec, const ModelWeights& w, const Matrix& batch,
                   ForwardCache* cache, std::vector<Matrix>* latents) {
    if (spec.layers.empty()) throw ShapeError("mlp_forward: empty spec");
    if (batch.cols() != spec.input_dim())
        throw ShapeError("mlp_forward: batch width " + std::to_string(batch.cols()) +
                         " != input dim " + std::to_string(spec.input_dim()));

    if (cache) {
        cache->input = batch;
        cache->pre.clear();
        cache->post.clear();
    }
    if (latents) latents->clear();

    Matrix cur = batch;
    const int L = static_cast<int>(spec.layers.size());
    for (int l = 0; l < L; ++l) {
        auto W = w.tensor(2 * l);
        auto b = w.tensor(2 * l + 1);
        Matrix pre(cur.rows(), spec.layers[l].out);
        pre.noalias() = cur * W;
        pre.rowwise() += b.row(0);
        Matrix post = pre;
        apply_activation(spec.layers[l].act, post);
        if (cache) {
            cache->pre.push_back(pre);
            cache->post.push_back(post);
        }
        if (latents && l + 1 < L) latents->push_back(post);
        cur = std::move(post);
    }
    return cur;
}

ModelWeights mlp_backward(const MlpSpec& spec, const ModelWeights& w, const ForwardCache& cache,
                          const Matrix& doutput,
                          const std::vector<std::pair<int, Matrix>>& dlatents, Matrix* dinput) {
    const int L = static_cast<int>(spec.layers.size());
    if (static_cast<int>(cache.post.size()) != L)
        throw ShapeError("mlp_backward: cache does not match spec");

    ModelWeights grads(spec);
    Matrix g = doutput;  // gradient on post-activation of the current layer
    for (int l = L - 1; l >= 0; --l) {
        for (const auto& [idx, dl] : dlatents) {
            if (idx == l) {
                if (l == L - 1) throw ShapeError("mlp_backward: output is not a latent");
                require_same_shape(dl, cache.post[l], "mlp_backward latent grad");
                g += dl;
            }
        }
        activation_backward(spec.layers[l].act, cache.pre[l], g);
        const Matrix& below = (l == 0) ? cache.input : cache.post[l - 1];
        grads.tensor(2 * l).noalias() = below.transpose() * g;
        grads.tensor(2 * l + 1) = g.colwise().sum();
        if (l > 0 || dinput) {
            Matrix next(g.rows(), spec.layers[l].in);
            next.noalias() = g * w.tensor(2 * l).transpose();
            if (l == 0) {
                *dinput = std::move(next);
                break;
            }
            g = std::move(next);
        }
    }
    return grads;
}

double cross_entropy(const Matrix& logits, const std::vector<int>& labels, Matrix* dlogits) {
    const Eigen::Index n = logits.rows();
    const Eigen::Index c = logits.cols();
    if (static_cast<Eigen::Index>(labels.size()) != n)
        throw ShapeError("cross_entropy: label count mismatch");
    for (int y : labels)
        if (y < 0 || y >= c) throw DomainError("cross_entropy: label out of range");

    double loss = 0.0;
    if (dlogits) dlogits->resize(n, c);
    for (Eigen::Index i = 0; i < n; ++i) {
        double mx = logits.row(i).maxCoeff();
        Eigen::RowVectorXd shifted = logits.row(i).array() - mx;
        double lse = std::log(shifted.array().exp().sum());
        loss += lse - shifted(labels[i]);
        if (dlogits) {
            Eigen::RowVectorXd p = (shifted.array() - lse).exp();
            dlogits->row(i) = p / static_cast<double>(n);
            (*dlogits)(i, labels[i]) -= 1.0 / static_cast<double>(n);
        }
    }
    return loss / static_cast<double>(n);
}

std::pair<double, ModelWeights> loss_and_grad(const MlpSpec& spec, const ModelWeights& w,
                                              const Matrix& batch, const std::vector<int>& labels,
                                              const std::vector<PenaltyTerm>& penalties) {
    ForwardCache cache;
    Matrix logits = mlp_forward(spec, w, batch, &cache);
    Matrix dlogits;
    double loss = cross_entropy(logits, labels, &dlogits);
    ModelWeights grads = mlp_backward(spec, w, cache, dlogits);
    for (const auto& p : penalties) {
        loss += p.weight * p.value;
        if (p.grads) {
            if (!p.grads->same_shape(grads))
                throw ShapeError("loss_and_grad: penalty gradient shape mismatch");
            grads.as_vector() += p.weight * p.grads->as_vector();
        }
    }
    return {loss, std::move(grads)};
}

}  // namespace fedmmd
