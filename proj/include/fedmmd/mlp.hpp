#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedmmd/matrix.hpp"
#include "fedmmd/rng.hpp"

namespace fedmmd {

// Parameter storage is 64-byte aligned so Eigen maps over tensor slots sit at
// run-stable addresses modulo the SIMD width; reductions then use the same
// vector peeling in every run, which keeps training bitwise reproducible.
using ParamVec = std::vector<double, Eigen::aligned_allocator<double>>;

enum class Activation { relu, identity };

struct LayerSpec {
    int in = 0;
    int out = 0;
    Activation act = Activation::identity;
};

// Architecture of a fully connected network. `extractor_layers` marks the
// boundary between the feature extractor and the classifier: layers
// [0, extractor_layers) belong to the extractor, the rest to the classifier.
// Post-activation outputs of all layers except the last are the latent
// attachment points for feature-drift penalties, ordered deepest first.
struct MlpSpec {
    std::vector<LayerSpec> layers;
    int extractor_layers = 0;

    // Task network: in -> hidden -> classes, hidden activation configurable.
    // The hidden layer output is the (single) constrained latent space.
    static MlpSpec task_net(int in, int hidden, int classes,
                            Activation hidden_act = Activation::relu) {
        MlpSpec s;
        s.layers.push_back({in, hidden, hidden_act});
        s.layers.push_back({hidden, classes, Activation::identity});
        s.extractor_layers = 1;
        return s;
    }

    // Deep-kernel featurizer: `depth` linear layers with relu between them
    // and a linear output, all hidden widths equal.
    static MlpSpec featurizer(int in, int hidden, int depth) {
        MlpSpec s;
        for (int i = 0; i < depth; ++i) {
            int li = (i == 0) ? in : hidden;
            Activation a = (i + 1 < depth) ? Activation::relu : Activation::identity;
            s.layers.push_back({li, hidden, a});
        }
        s.extractor_layers = depth;
        return s;
    }

    int input_dim() const { return layers.empty() ? 0 : layers.front().in; }
    int output_dim() const { return layers.empty() ? 0 : layers.back().out; }
    int num_latents() const { return static_cast<int>(layers.size()) - 1; }

    // Attachment points deepest-first: latent index num_latents()-1 is the
    // deepest intermediate representation.
    std::vector<int> attachments_deepest_first() const {
        std::vector<int> a;
        for (int i = num_latents() - 1; i >= 0; --i) a.push_back(i);
        return a;
    }

    size_t param_count() const {
        size_t n = 0;
        for (const auto& l : layers) n += static_cast<size_t>(l.in) * l.out + l.out;
        return n;
    }

    bool chained() const {
        for (size_t i = 1; i < layers.size(); ++i)
            if (layers[i].in != layers[i - 1].out) return false;
        return true;
    }

    bool operator==(const MlpSpec& o) const {
        if (extractor_layers != o.extractor_layers || layers.size() != o.layers.size())
            return false;
        for (size_t i = 0; i < layers.size(); ++i)
            if (layers[i].in != o.layers[i].in || layers[i].out != o.layers[i].out ||
                layers[i].act != o.layers[i].act)
                return false;
        return true;
    }
};

// Flat parameter vector with named tensor slots. Layer l owns slots
// "W<l>" (in x out) and "b<l>" (1 x out), in layer order, so splitting at the
// extractor boundary is an offset into the flat storage.
class ModelWeights {
public:
    struct Slot {
        std::string name;
        int rows = 0;
        int cols = 0;
        size_t offset = 0;
    };

    ModelWeights() = default;

    explicit ModelWeights(const MlpSpec& spec) {
        size_t off = 0;
        int l = 0;
        for (const auto& layer : spec.layers) {
            slots_.push_back({"W" + std::to_string(l), layer.in, layer.out, off});
            off += static_cast<size_t>(layer.in) * layer.out;
            slots_.push_back({"b" + std::to_string(l), 1, layer.out, off});
            off += static_cast<size_t>(layer.out);
            ++l;
        }
        split_slot_ = 2 * spec.extractor_layers;
        data_.assign(off, 0.0);
    }

    // Uniform fan-in init: W, b ~ U(-1/sqrt(in), 1/sqrt(in)) per layer.
    void init_uniform_fan_in(Rng& rng) {
        for (size_t s = 0; s < slots_.size(); s += 2) {
            double bound = 1.0 / std::sqrt(static_cast<double>(slots_[s].rows));
            for (size_t i = slots_[s].offset; i < slots_[s].offset + slot_size(s); ++i)
                data_[i] = rng.uniform(-bound, bound);
            size_t b = s + 1;
            for (size_t i = slots_[b].offset; i < slots_[b].offset + slot_size(b); ++i)
                data_[i] = rng.uniform(-bound, bound);
        }
    }

    size_t size() const { return data_.size(); }
    size_t num_slots() const { return slots_.size(); }
    const Slot& slot(size_t i) const { return slots_[i]; }
    size_t slot_size(size_t i) const {
        return static_cast<size_t>(slots_[i].rows) * slots_[i].cols;
    }

    Eigen::Map<Matrix> tensor(size_t i) {
        return {data_.data() + slots_[i].offset, slots_[i].rows, slots_[i].cols};
    }
    Eigen::Map<const Matrix> tensor(size_t i) const {
        return {data_.data() + slots_[i].offset, slots_[i].rows, slots_[i].cols};
    }

    std::span<double> flat() { return data_; }
    std::span<const double> flat() const { return data_; }
    Eigen::Map<Vector> as_vector() {
        return {data_.data(), static_cast<Eigen::Index>(data_.size())};
    }
    Eigen::Map<const Vector> as_vector() const {
        return {data_.data(), static_cast<Eigen::Index>(data_.size())};
    }

    // theta/phi segments (extractor / classifier).
    size_t split_offset() const {
        return split_slot_ < slots_.size() ? slots_[split_slot_].offset : data_.size();
    }
    std::span<const double> extractor_span() const {
        return {data_.data(), split_offset()};
    }
    std::span<const double> classifier_span() const {
        return {data_.data() + split_offset(), data_.size() - split_offset()};
    }

    bool same_shape(const ModelWeights& o) const {
        if (data_.size() != o.data_.size() || slots_.size() != o.slots_.size()) return false;
        for (size_t i = 0; i < slots_.size(); ++i)
            if (slots_[i].rows != o.slots_[i].rows || slots_[i].cols != o.slots_[i].cols)
                return false;
        return true;
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    ParamVec& raw() { return data_; }
    const ParamVec& raw() const { return data_; }

private:
    std::vector<Slot> slots_;
    ParamVec data_;
    size_t split_slot_ = 0;
};

struct ForwardCache {
    Matrix input;
    std::vector<Matrix> pre;   // pre-activation per layer
    std::vector<Matrix> post;  // post-activation per layer (post.back() = output)
};

// Forward pass. `latents`, when non-null, receives the post-activation output
// of every layer except the last, in layer order.
Matrix mlp_forward(const MlpSpec& spec, const ModelWeights& w, const Matrix& batch,
                   ForwardCache* cache = nullptr, std::vector<Matrix>* latents = nullptr);

// Backward pass from an upstream gradient on the output plus optional
// upstream gradients injected at latent attachment points (pairs of
// latent index, gradient on that post-activation output). Returns parameter
// gradients; fills `dinput` with the gradient on the batch when requested.
ModelWeights mlp_backward(const MlpSpec& spec, const ModelWeights& w, const ForwardCache& cache,
                          const Matrix& doutput,
                          const std::vector<std::pair<int, Matrix>>& dlatents = {},
                          Matrix* dinput = nullptr);

// Mean softmax cross-entropy and its exact gradient on the logits.
double cross_entropy(const Matrix& logits, const std::vector<int>& labels, Matrix* dlogits);

// Additive penalty contribution for loss_and_grad.
struct PenaltyTerm {
    double weight = 0.0;
    double value = 0.0;
    const ModelWeights* grads = nullptr;  // unscaled penalty gradient, may be null
};

// loss = mean CE + sum_i weight_i * value_i, grads accumulated accordingly.
std::pair<double, ModelWeights> loss_and_grad(const MlpSpec& spec, const ModelWeights& w,
                                              const Matrix& batch, const std::vector<int>& labels,
                                              const std::vector<PenaltyTerm>& penalties = {});

}  // namespace fedmmd
