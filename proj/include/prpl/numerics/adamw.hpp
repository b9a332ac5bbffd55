#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "prpl/numerics/mlp.hpp"

namespace prpl {

struct AdamWConfig {
    double lr = 2e-4;
    double weight_decay = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamWState {
    AdamWConfig config;
    std::vector<Tensor2> m;
    std::vector<Tensor2> v;
    std::uint64_t step = 0;

    AdamWState() = default;
    AdamWState(const ParamList& params, AdamWConfig cfg) : config(cfg) {
        for (const Tensor2* t : params.tensors) {
            m.emplace_back(t->rows(), t->cols());
            v.emplace_back(t->rows(), t->cols());
        }
    }
};

/// One decoupled-weight-decay Adam update: p <- p (1 - lr wd) - lr mhat / (sqrt(vhat) + eps).
/// Gradients are validated before any parameter is touched.
inline void adamw_step(const ParamList& params, const std::vector<const Tensor2*>& grads, AdamWState& state) {
    require(params.tensors.size() == grads.size() && grads.size() == state.m.size(), ErrorKind::contract,
            "adamw: parameter/gradient/state counts differ");
    for (std::size_t i = 0; i < grads.size(); ++i) {
        require_same_shape(*params.tensors[i], *grads[i], "adamw gradient");
        require_same_shape(*params.tensors[i], state.m[i], "adamw state");
        if (!grads[i]->all_finite())
            fail(ErrorKind::training, "non-finite gradient in layer " + std::to_string(params.layer[i]) +
                                          " (tensor " + std::to_string(i) + ")");
    }
    const auto& c = state.config;
    ++state.step;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    const float decay = static_cast<float>(1.0 - c.lr * c.weight_decay);
    const float b1 = static_cast<float>(c.beta1), b2 = static_cast<float>(c.beta2);
    const float step_size = static_cast<float>(c.lr / bc1);
    const float inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
    const float eps = static_cast<float>(c.eps);
    for (std::size_t i = 0; i < grads.size(); ++i) {
        Tensor2& p = *params.tensors[i];
        const Tensor2& g = *grads[i];
        Tensor2& m = state.m[i];
        Tensor2& v = state.v[i];
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = b1 * m[k] + (1.0f - b1) * g[k];
            v[k] = b2 * v[k] + (1.0f - b2) * g[k] * g[k];
            p[k] *= decay;
            p[k] -= step_size * m[k] / (std::sqrt(v[k]) * inv_sqrt_bc2 + eps);
        }
    }
}

inline std::vector<const Tensor2*> const_view(const ParamList& grads) {
    return {grads.tensors.begin(), grads.tensors.end()};
}

/// Convenience for plain MLPs: gradients come as a zeros_like(params) container.
inline void adamw_step(MlpParams& params, MlpParams& grads, AdamWState& state) {
    adamw_step(params.params(), const_view(grads.params()), state);
    ++params.version;
}

}  // namespace prpl
