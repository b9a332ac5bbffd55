#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "prpl/numerics/ops.hpp"
#include "prpl/numerics/rng.hpp"
#include "prpl/numerics/tensor.hpp"

namespace prpl {

/// Post-linear activation of a dense layer. `mish_layernorm` is Linear -> Mish -> LayerNorm.
enum class Activation { identity, mish, mish_layernorm, tanh };

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::mish: return "mish";
        case Activation::mish_layernorm: return "mish_layernorm";
        case Activation::tanh: return "tanh";
    }
    return "?";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "identity") return Activation::identity;
    if (s == "mish") return Activation::mish;
    if (s == "mish_layernorm") return Activation::mish_layernorm;
    if (s == "tanh") return Activation::tanh;
    fail(ErrorKind::configuration, "unknown activation '" + s + "'");
}

struct DenseLayer {
    Tensor2 weight;   // in x out
    Tensor2 bias;     // 1 x out
    Tensor2 ln_gain;  // 1 x out, only for mish_layernorm
    Tensor2 ln_bias;
    Activation act = Activation::identity;

    std::size_t in_width() const { return weight.rows(); }
    std::size_t out_width() const { return weight.cols(); }
    bool has_norm() const { return act == Activation::mish_layernorm; }
};

/// Flat list of trainable tensors with the layer each belongs to (for diagnostics).
struct ParamList {
    std::vector<Tensor2*> tensors;
    std::vector<std::size_t> layer;

    void add(Tensor2& t, std::size_t layer_index) {
        tensors.push_back(&t);
        layer.push_back(layer_index);
    }
    void append(const ParamList& other, std::size_t layer_offset = 0) {
        for (std::size_t i = 0; i < other.tensors.size(); ++i) add(*other.tensors[i], other.layer[i] + layer_offset);
    }
};

struct MlpParams {
    std::vector<DenseLayer> layers;
    /// Bumped by every optimizer update; forward caches remember it.
    std::uint64_t version = 0;

    std::size_t in_width() const { return layers.empty() ? 0 : layers.front().in_width(); }
    std::size_t out_width() const { return layers.empty() ? 0 : layers.back().out_width(); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.weight.size() + l.bias.size() + l.ln_gain.size() + l.ln_bias.size();
        return n;
    }

    ParamList params() {
        ParamList list;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            auto& l = layers[i];
            list.add(l.weight, i);
            list.add(l.bias, i);
            if (l.has_norm()) {
                list.add(l.ln_gain, i);
                list.add(l.ln_bias, i);
            }
        }
        return list;
    }
};

/// Widths {w0, w1, ..., wk} give k layers; hidden layers use `hidden`, the last uses `output`.
/// Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline MlpParams make_mlp(const std::vector<std::size_t>& widths, Activation hidden, Activation output, Rng& rng) {
    require(widths.size() >= 2, ErrorKind::configuration, "mlp needs at least input and output widths");
    MlpParams p;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        require(widths[i] > 0 && widths[i + 1] > 0, ErrorKind::configuration, "mlp width must be positive");
        DenseLayer l;
        l.act = (i + 2 == widths.size()) ? output : hidden;
        const double bound = 1.0 / std::sqrt(static_cast<double>(widths[i]));
        l.weight = Tensor2(widths[i], widths[i + 1]);
        l.bias = Tensor2(1, widths[i + 1]);
        for (auto& v : l.weight.span()) v = static_cast<float>(rng.uniform(-bound, bound));
        for (auto& v : l.bias.span()) v = static_cast<float>(rng.uniform(-bound, bound));
        if (l.has_norm()) {
            l.ln_gain = Tensor2(1, widths[i + 1], 1.0f);
            l.ln_bias = Tensor2(1, widths[i + 1], 0.0f);
        }
        p.layers.push_back(std::move(l));
    }
    return p;
}

/// Zero tensors shaped like `p`; doubles as the gradient container.
inline MlpParams zeros_like(const MlpParams& p) {
    MlpParams g;
    for (const auto& l : p.layers) {
        DenseLayer z;
        z.act = l.act;
        z.weight = Tensor2(l.weight.rows(), l.weight.cols());
        z.bias = Tensor2(1, l.bias.cols());
        if (l.has_norm()) {
            z.ln_gain = Tensor2(1, l.ln_gain.cols());
            z.ln_bias = Tensor2(1, l.ln_bias.cols());
        }
        g.layers.push_back(std::move(z));
    }
    return g;
}

struct MlpCache {
    const MlpParams* owner = nullptr;
    std::uint64_t version = 0;
    std::size_t batch = 0;
    std::vector<Tensor2> inputs;   // input to each layer
    std::vector<Tensor2> pre;      // linear output
    std::vector<Tensor2> post;     // activation output (before norm for mish_layernorm)
    std::vector<Tensor2> xhat;     // normalized activations
    std::vector<std::vector<float>> inv_std;
};

struct MlpForward {
    Tensor2 output;
    MlpCache cache;
};

inline Tensor2 mlp_forward_into(const MlpParams& params, const Tensor2& input, MlpCache* cache) {
    require(!params.layers.empty(), ErrorKind::contract, "mlp has no layers");
    require(input.cols() == params.in_width(), ErrorKind::contract,
            "mlp input width " + std::to_string(input.cols()) + " != " + std::to_string(params.in_width()));
    if (cache) {
        cache->owner = &params;
        cache->version = params.version;
        cache->batch = input.rows();
        cache->inputs.assign(params.layers.size(), {});
        cache->pre.assign(params.layers.size(), {});
        cache->post.assign(params.layers.size(), {});
        cache->xhat.assign(params.layers.size(), {});
        cache->inv_std.assign(params.layers.size(), {});
    }
    Tensor2 x = input;
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        const auto& l = params.layers[i];
        Tensor2 pre;
        ops::linear_forward(x, l.weight, l.bias, pre);
        Tensor2 out;
        switch (l.act) {
            case Activation::identity: out = pre; break;
            case Activation::mish: ops::mish_forward(pre, out); break;
            case Activation::tanh: ops::tanh_forward(pre, out); break;
            case Activation::mish_layernorm: {
                Tensor2 m;
                ops::mish_forward(pre, m);
                Tensor2 xhat;
                std::vector<float> inv_std;
                ops::layernorm_forward(m, l.ln_gain, l.ln_bias, out, xhat, inv_std);
                if (cache) {
                    cache->post[i] = std::move(m);
                    cache->xhat[i] = std::move(xhat);
                    cache->inv_std[i] = std::move(inv_std);
                }
                break;
            }
        }
        if (cache) {
            cache->inputs[i] = std::move(x);
            if (l.act == Activation::tanh) cache->post[i] = out;
            cache->pre[i] = std::move(pre);
        }
        x = std::move(out);
    }
    return x;
}

inline MlpForward mlp_forward(const MlpParams& params, const Tensor2& input) {
    MlpForward f;
    f.output = mlp_forward_into(params, input, &f.cache);
    return f;
}

/// Inference-only forward pass (no cache).
inline Tensor2 mlp_apply(const MlpParams& params, const Tensor2& input) {
    return mlp_forward_into(params, input, nullptr);
}

struct MlpBackward {
    MlpParams grads;
    Tensor2 input_grad;
};

/// Accumulates parameter gradients into `grads` (shaped like params) and returns d input.
inline Tensor2 mlp_backward_into(const MlpParams& params, const MlpCache& cache, const Tensor2& output_grad,
                                 MlpParams& grads) {
    require(cache.owner == &params && cache.version == params.version &&
                cache.inputs.size() == params.layers.size(),
            ErrorKind::contract, "mlp backward: cache does not belong to these parameters");
    require(output_grad.rows() == cache.batch && output_grad.cols() == params.out_width(), ErrorKind::contract,
            "mlp backward: output gradient shape " + shape_string(output_grad));
    Tensor2 g = output_grad;
    for (std::size_t ii = params.layers.size(); ii-- > 0;) {
        const auto& l = params.layers[ii];
        auto& gl = grads.layers[ii];
        Tensor2 dpre;
        switch (l.act) {
            case Activation::identity: dpre = g; break;
            case Activation::mish: ops::mish_backward(cache.pre[ii], g, dpre); break;
            case Activation::tanh: ops::tanh_backward(cache.post[ii], g, dpre); break;
            case Activation::mish_layernorm: {
                Tensor2 dm;
                ops::layernorm_backward(cache.xhat[ii], cache.inv_std[ii], l.ln_gain, g, gl.ln_gain, gl.ln_bias, dm);
                ops::mish_backward(cache.pre[ii], dm, dpre);
                break;
            }
        }
        Tensor2 dx;
        ops::linear_backward(cache.inputs[ii], l.weight, dpre, gl.weight, gl.bias, &dx);
        g = std::move(dx);
    }
    return g;
}

inline MlpBackward mlp_backward(const MlpParams& params, const MlpCache& cache, const Tensor2& output_grad) {
    MlpBackward b;
    b.grads = zeros_like(params);
    b.input_grad = mlp_backward_into(params, cache, output_grad, b.grads);
    return b;
}

}  // namespace prpl
