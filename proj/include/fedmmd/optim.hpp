#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "fedmmd/common.hpp"

namespace fedmmd {

struct SgdConfig {
    double lr = 0.01;
    double momentum = 0.0;
    double weight_decay = 0.0;
};

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// Stateful first-order optimizer over a flat parameter vector.
//
// SGD with momentum:  v <- m*v + g;  p <- p - lr*(v + wd*p)
// AdamW (decoupled):  m,v moments with bias correction;
//                     p <- p - lr*(mhat/(sqrt(vhat)+eps) + wd*p)
class Optimizer {
public:
    enum class Kind { sgd_momentum, adamw };

    static Optimizer sgd(const SgdConfig& cfg, size_t n) {
        Optimizer o;
        o.kind_ = Kind::sgd_momentum;
        o.sgd_ = cfg;
        o.m_.assign(n, 0.0);
        return o;
    }

    static Optimizer adamw(const AdamWConfig& cfg, size_t n) {
        Optimizer o;
        o.kind_ = Kind::adamw;
        o.adamw_ = cfg;
        o.m_.assign(n, 0.0);
        o.v_.assign(n, 0.0);
        return o;
    }

    Kind kind() const { return kind_; }
    long step_count() const { return steps_; }
    double learning_rate() const {
        return kind_ == Kind::sgd_momentum ? sgd_.lr : adamw_.lr;
    }

    void step(std::span<double> params, std::span<const double> grads) {
        if (params.size() != m_.size() || grads.size() != m_.size())
            throw ShapeError("Optimizer::step: size mismatch");
        for (double g : grads)
            if (!std::isfinite(g)) throw NumericError("Optimizer::step: non-finite gradient");
        ++steps_;
        if (kind_ == Kind::sgd_momentum) {
            for (size_t i = 0; i < params.size(); ++i) {
                m_[i] = sgd_.momentum * m_[i] + grads[i];
                params[i] -= sgd_.lr * (m_[i] + sgd_.weight_decay * params[i]);
            }
        } else {
            const double bc1 = 1.0 - std::pow(adamw_.beta1, static_cast<double>(steps_));
            const double bc2 = 1.0 - std::pow(adamw_.beta2, static_cast<double>(steps_));
            for (size_t i = 0; i < params.size(); ++i) {
                m_[i] = adamw_.beta1 * m_[i] + (1.0 - adamw_.beta1) * grads[i];
                v_[i] = adamw_.beta2 * v_[i] + (1.0 - adamw_.beta2) * grads[i] * grads[i];
                double mhat = m_[i] / bc1;
                double vhat = v_[i] / bc2;
                params[i] -= adamw_.lr * (mhat / (std::sqrt(vhat) + adamw_.eps) +
                                          adamw_.weight_decay * params[i]);
            }
        }
    }

private:
    Kind kind_ = Kind::sgd_momentum;
    SgdConfig sgd_;
    AdamWConfig adamw_;
    std::vector<double> m_;
    std::vector<double> v_;
    long steps_ = 0;
};

}  // namespace fedmmd
