#pragma once

// Time- and condition-conditioned sequence network shared by both backbones.
//
// Tokens are embedded to `width` channels and shifted by a conditioning vector z computed from a
// sinusoidal embedding of s, the (possibly null) condition scalar and the first token, which
// holds the anchored observation. Each residual block has a
// token-mixing branch (one learned n x n map shared by all channels) and a channel MLP branch;
// both branch inputs are layer-normalized and then scaled and shifted per sample from z. A linear
// skip maps input tokens straight to the output.
// Per-forward cost grows linearly with the token count for the channel path.

#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "prpl/numerics/mlp.hpp"

namespace prpl {

/// Reserved condition value for the unconditional branch; normalized properties live in [-1, 1].
inline constexpr float kNullCondition = -2.0f;

struct DenoiserShape {
    std::size_t token_count = 5;
    std::size_t token_width = 2;
    std::size_t width = 64;
    std::size_t blocks = 2;
    std::size_t time_embed = 32;

    std::size_t sequence_width() const { return token_count * token_width; }
    friend bool operator==(const DenoiserShape&, const DenoiserShape&) = default;
};

struct DenoiserBlock {
    Tensor2 mod_w, mod_b;      // z -> [shift1 scale1 shift2 scale2], width x 4 width
    Tensor2 ln1_g, ln1_b;
    Tensor2 mix_w, mix_b;      // token_count x token_count, 1 x token_count
    Tensor2 ln2_g, ln2_b;
    Tensor2 fc1_w, fc1_b;      // width x 2 width
    Tensor2 fc2_w, fc2_b;      // 2 width x width
};

struct DenoiserParams {
    DenoiserShape shape;
    Tensor2 in_w, in_b;
    Tensor2 pos;               // token_count x width
    MlpParams cond;            // time embedding + condition -> width
    std::vector<DenoiserBlock> blocks;
    Tensor2 out_ln_g, out_ln_b;
    Tensor2 out_w, out_b;
    Tensor2 skip_w;            // token_width x token_width
    std::uint64_t version = 0;

    /// Visits every trainable tensor with a stable name.
    template <class Fn>
    void for_each_named(Fn&& fn) {
        fn("in_w", in_w);
        fn("in_b", in_b);
        fn("pos", pos);
        for (std::size_t i = 0; i < cond.layers.size(); ++i) {
            fn("cond" + std::to_string(i) + "_w", cond.layers[i].weight);
            fn("cond" + std::to_string(i) + "_b", cond.layers[i].bias);
        }
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            auto& k = blocks[b];
            const std::string p = "block" + std::to_string(b) + "_";
            fn(p + "mod_w", k.mod_w);
            fn(p + "mod_b", k.mod_b);
            fn(p + "ln1_g", k.ln1_g);
            fn(p + "ln1_b", k.ln1_b);
            fn(p + "mix_w", k.mix_w);
            fn(p + "mix_b", k.mix_b);
            fn(p + "ln2_g", k.ln2_g);
            fn(p + "ln2_b", k.ln2_b);
            fn(p + "fc1_w", k.fc1_w);
            fn(p + "fc1_b", k.fc1_b);
            fn(p + "fc2_w", k.fc2_w);
            fn(p + "fc2_b", k.fc2_b);
        }
        fn("out_ln_g", out_ln_g);
        fn("out_ln_b", out_ln_b);
        fn("out_w", out_w);
        fn("out_b", out_b);
        fn("skip_w", skip_w);
    }

    ParamList params() {
        ParamList list;
        std::size_t idx = 0;
        for_each_named([&](const std::string&, Tensor2& t) { list.add(t, idx++); });
        return list;
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        for_each_named([&](const std::string&, Tensor2& t) { n += t.size(); });
        return n;
    }
};

namespace detail {

inline Tensor2 uniform_tensor(std::size_t r, std::size_t c, double fan_in, Rng& rng) {
    Tensor2 t(r, c);
    const double bound = 1.0 / std::sqrt(fan_in);
    for (auto& v : t.span()) v = static_cast<float>(rng.uniform(-bound, bound));
    return t;
}

}  // namespace detail

inline DenoiserParams make_denoiser(const DenoiserShape& shape, Rng& rng) {
    require(shape.token_count >= 1 && shape.token_width >= 1 && shape.width >= 2 && shape.time_embed >= 2 &&
                shape.time_embed % 2 == 0,
            ErrorKind::configuration, "invalid denoiser shape");
    const std::size_t n = shape.token_count, d = shape.token_width, h = shape.width;
    DenoiserParams p;
    p.shape = shape;
    p.in_w = detail::uniform_tensor(d, h, d, rng);
    p.in_b = detail::uniform_tensor(1, h, d, rng);
    p.pos = Tensor2(n, h);
    for (auto& v : p.pos.span()) v = static_cast<float>(0.1 * rng.normal());
    p.cond = make_mlp({shape.time_embed + 1 + d, h, h}, Activation::mish, Activation::identity, rng);
    for (std::size_t b = 0; b < shape.blocks; ++b) {
        DenoiserBlock k;
        k.mod_w = Tensor2(h, 4 * h);
        k.mod_b = Tensor2(1, 4 * h);
        k.ln1_g = Tensor2(1, h, 1.0f);
        k.ln1_b = Tensor2(1, h);
        k.mix_w = detail::uniform_tensor(n, n, n, rng);
        k.mix_b = Tensor2(1, n);
        k.ln2_g = Tensor2(1, h, 1.0f);
        k.ln2_b = Tensor2(1, h);
        k.fc1_w = detail::uniform_tensor(h, 2 * h, h, rng);
        k.fc1_b = detail::uniform_tensor(1, 2 * h, h, rng);
        k.fc2_w = detail::uniform_tensor(2 * h, h, 2 * h, rng);
        k.fc2_b = Tensor2(1, h);
        p.blocks.push_back(std::move(k));
    }
    p.out_ln_g = Tensor2(1, h, 1.0f);
    p.out_ln_b = Tensor2(1, h);
    // Small output layer so an untrained network predicts ~0.
    p.out_w = detail::uniform_tensor(h, d, h, rng);
    for (auto& v : p.out_w.span()) v *= 0.1f;
    p.out_b = Tensor2(1, d);
    p.skip_w = Tensor2(d, d);
    return p;
}

/// Zero tensors shaped like `p`.
inline DenoiserParams zeros_like(const DenoiserParams& p) {
    DenoiserParams g = p;
    g.for_each_named([](const std::string&, Tensor2& t) { t.fill(0.0f); });
    return g;
}

/// Sinusoidal embedding of a continuous time s in [0, 1].
inline void time_embedding(double s, std::size_t dim, float* out) {
    const std::size_t half = dim / 2;
    for (std::size_t k = 0; k < half; ++k) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
        const double arg = 1000.0 * s * freq;
        out[k] = static_cast<float>(std::sin(arg));
        out[half + k] = static_cast<float>(std::cos(arg));
    }
}

struct DenoiserBlockCache {
    Tensor2 mod;           // B x 4h
    Tensor2 ln1_xhat; std::vector<float> ln1_is; Tensor2 n1; Tensor2 u;
    Tensor2 ln2_xhat; std::vector<float> ln2_is; Tensor2 n2; Tensor2 v;
    Tensor2 a1, m1;        // fc1 pre-activation, mish output
};

struct DenoiserCache {
    const DenoiserParams* owner = nullptr;
    std::uint64_t version = 0;
    std::size_t batch = 0;
    Tensor2 tokens;        // (B n) x d
    Tensor2 cond_in;       // B x (E + 1 + d)
    MlpCache cond_cache;
    Tensor2 z;             // B x h
    std::vector<DenoiserBlockCache> blocks;
    Tensor2 out_xhat; std::vector<float> out_is; Tensor2 o;
};

namespace detail {

// Y_b = M U_b + mb (per sample b; U_b is n x h)
inline void token_mix_forward(const Tensor2& u, const Tensor2& m, const Tensor2& mb, std::size_t batch,
                              std::size_t n, Tensor2& y) {
    const auto h = static_cast<Eigen::Index>(u.cols()), ni = static_cast<Eigen::Index>(n);
    y = Tensor2(u.rows(), u.cols());
    const auto mm = ops::as_matrix(m);
    const Eigen::Map<const Eigen::VectorXf> bias(mb.data(), ni);
    for (std::size_t b = 0; b < batch; ++b) {
        ops::ConstMatMap ub(u.data() + b * n * u.cols(), ni, h);
        ops::MatMap yb(y.data() + b * n * u.cols(), ni, h);
        yb.noalias() = mm * ub;
        yb.colwise() += bias;
    }
}

inline void token_mix_backward(const Tensor2& u, const Tensor2& m, const Tensor2& dy, std::size_t batch,
                               std::size_t n, Tensor2& dm, Tensor2& dmb, Tensor2& du) {
    const auto h = static_cast<Eigen::Index>(u.cols()), ni = static_cast<Eigen::Index>(n);
    du = Tensor2(u.rows(), u.cols());
    const auto mm = ops::as_matrix(m);
    auto dmm = ops::as_matrix(dm);
    Eigen::Map<Eigen::VectorXf> dbias(dmb.data(), ni);
    for (std::size_t b = 0; b < batch; ++b) {
        ops::ConstMatMap ub(u.data() + b * n * u.cols(), ni, h);
        ops::ConstMatMap dyb(dy.data() + b * n * u.cols(), ni, h);
        ops::MatMap dub(du.data() + b * n * u.cols(), ni, h);
        dmm.noalias() += dyb * ub.transpose();
        dbias += dyb.rowwise().sum();
        dub.noalias() = mm.transpose() * dyb;
    }
}

// x[(b n + i), :] += z[b, :]
inline void add_per_sample(Tensor2& x, const Tensor2& z, std::size_t n) {
    const std::size_t h = x.cols();
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const float* zr = z.data() + (r / n) * h;
        float* __restrict xr = x.data() + r * h;
        for (std::size_t c = 0; c < h; ++c) xr[c] += zr[c];
    }
}

// dz[b, :] += sum_i dx[(b n + i), :]
inline void sum_per_sample(const Tensor2& dx, std::size_t n, Tensor2& dz) {
    const std::size_t h = dx.cols();
    for (std::size_t r = 0; r < dx.rows(); ++r) {
        float* __restrict zr = dz.data() + (r / n) * h;
        const float* xr = dx.data() + r * h;
        for (std::size_t c = 0; c < h; ++c) zr[c] += xr[c];
    }
}

// y[(b n + i), :] = x[(b n + i), :] * (1 + mod[b, scale]) + mod[b, shift]
inline void modulate(const Tensor2& x, const Tensor2& mod, std::size_t shift_at, std::size_t scale_at,
                     std::size_t n, Tensor2& y) {
    const std::size_t h = x.cols();
    y = Tensor2(x.rows(), h);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const float* m = mod.data() + (r / n) * mod.cols();
        const float* __restrict xr = x.data() + r * h;
        float* __restrict yr = y.data() + r * h;
        for (std::size_t c = 0; c < h; ++c) yr[c] = xr[c] * (1.0f + m[scale_at + c]) + m[shift_at + c];
    }
}

// Inverse of modulate for gradients: dx = dy * (1 + scale); dmod accumulates the shift/scale terms.
inline void modulate_backward(const Tensor2& x, const Tensor2& mod, std::size_t shift_at, std::size_t scale_at,
                              std::size_t n, const Tensor2& dy, Tensor2& dmod, Tensor2& dx) {
    const std::size_t h = x.cols();
    dx = Tensor2(x.rows(), h);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const float* m = mod.data() + (r / n) * mod.cols();
        float* dm = dmod.data() + (r / n) * mod.cols();
        const float* xr = x.data() + r * h;
        const float* dyr = dy.data() + r * h;
        float* __restrict dxr = dx.data() + r * h;
        for (std::size_t c = 0; c < h; ++c) {
            dxr[c] = dyr[c] * (1.0f + m[scale_at + c]);
            dm[scale_at + c] += dyr[c] * xr[c];
            dm[shift_at + c] += dyr[c];
        }
    }
}

}  // namespace detail

/// Network input: x (B x n d), per-row continuous time s in [0, 1] and per-row condition
/// (kNullCondition for unconditional). Output has the shape of x.
inline Tensor2 denoiser_forward(const DenoiserParams& p, const Tensor2& x, std::span<const double> s,
                                std::span<const float> cond, DenoiserCache* cache = nullptr) {
    const auto& sh = p.shape;
    const std::size_t n = sh.token_count, d = sh.token_width, h = sh.width, B = x.rows();
    require(x.cols() == sh.sequence_width(), ErrorKind::contract,
            "denoiser input width " + std::to_string(x.cols()) + " != " + std::to_string(sh.sequence_width()));
    require(s.size() == B && cond.size() == B, ErrorKind::contract, "denoiser: per-row time/condition count mismatch");

    Tensor2 tokens = x.reshaped(B * n, d);
    Tensor2 hs;
    ops::linear_forward(tokens, p.in_w, p.in_b, hs);
    for (std::size_t r = 0; r < hs.rows(); ++r) {
        const float* pr = p.pos.data() + (r % n) * h;
        float* hr = hs.data() + r * h;
        for (std::size_t c = 0; c < h; ++c) hr[c] += pr[c];
    }

    Tensor2 cond_in(B, sh.time_embed + 1 + d);
    for (std::size_t b = 0; b < B; ++b) {
        time_embedding(s[b], sh.time_embed, cond_in.data() + b * cond_in.cols());
        cond_in(b, sh.time_embed) = cond[b];
        std::copy_n(x.data() + b * x.cols(), d, cond_in.data() + b * cond_in.cols() + sh.time_embed + 1);
    }
    MlpCache* cc = cache ? &cache->cond_cache : nullptr;
    Tensor2 z = mlp_forward_into(p.cond, cond_in, cc);
    detail::add_per_sample(hs, z, n);

    if (cache) {
        cache->owner = &p;
        cache->version = p.version;
        cache->batch = B;
        cache->tokens = std::move(tokens);
        cache->cond_in = std::move(cond_in);
        cache->z = z;
        cache->blocks.assign(p.blocks.size(), {});
    }

    for (std::size_t bi = 0; bi < p.blocks.size(); ++bi) {
        const auto& k = p.blocks[bi];
        DenoiserBlockCache bc;
        ops::linear_forward(z, k.mod_w, k.mod_b, bc.mod);

        Tensor2 u;
        ops::layernorm_forward(hs, k.ln1_g, k.ln1_b, bc.n1, bc.ln1_xhat, bc.ln1_is);
        detail::modulate(bc.n1, bc.mod, 0, h, n, u);
        Tensor2 mixed;
        detail::token_mix_forward(u, k.mix_w, k.mix_b, B, n, mixed);
        ops::add_inplace(hs, mixed);

        Tensor2 v;
        ops::layernorm_forward(hs, k.ln2_g, k.ln2_b, bc.n2, bc.ln2_xhat, bc.ln2_is);
        detail::modulate(bc.n2, bc.mod, 2 * h, 3 * h, n, v);
        Tensor2 a1, m1, f;
        ops::linear_forward(v, k.fc1_w, k.fc1_b, a1);
        ops::mish_forward(a1, m1);
        ops::linear_forward(m1, k.fc2_w, k.fc2_b, f);
        ops::add_inplace(hs, f);
        if (cache) {
            bc.u = std::move(u);
            bc.v = std::move(v);
            bc.a1 = std::move(a1);
            bc.m1 = std::move(m1);
            cache->blocks[bi] = std::move(bc);
        }
    }

    Tensor2 o, oxhat;
    std::vector<float> ois;
    ops::layernorm_forward(hs, p.out_ln_g, p.out_ln_b, o, oxhat, ois);
    Tensor2 y;
    ops::linear_forward(o, p.out_w, p.out_b, y);
    ops::as_matrix(y).noalias() += ops::as_matrix(cache ? cache->tokens : tokens) * ops::as_matrix(p.skip_w);
    if (cache) {
        cache->out_xhat = std::move(oxhat);
        cache->out_is = std::move(ois);
        cache->o = std::move(o);
    }
    return y.reshaped(B, n * d);
}

/// Accumulates parameter gradients of <dy, output> into `g` (shaped like p).
inline void denoiser_backward(const DenoiserParams& p, const DenoiserCache& cache, const Tensor2& dy,
                              DenoiserParams& g) {
    require(cache.owner == &p && cache.version == p.version, ErrorKind::contract,
            "denoiser backward: stale or foreign cache");
    const auto& sh = p.shape;
    const std::size_t n = sh.token_count, d = sh.token_width, h = sh.width, B = cache.batch;
    require(dy.rows() == B && dy.cols() == n * d, ErrorKind::contract, "denoiser backward: gradient shape");

    Tensor2 dy_tok = dy.reshaped(B * n, d);
    ops::as_matrix(g.skip_w).noalias() += ops::as_matrix(cache.tokens).transpose() * ops::as_matrix(dy_tok);
    Tensor2 d_o;
    ops::linear_backward(cache.o, p.out_w, dy_tok, g.out_w, g.out_b, &d_o);
    Tensor2 dh;
    ops::layernorm_backward(cache.out_xhat, cache.out_is, p.out_ln_g, d_o, g.out_ln_g, g.out_ln_b, dh);

    Tensor2 dz(B, h);
    for (std::size_t bi = p.blocks.size(); bi-- > 0;) {
        const auto& k = p.blocks[bi];
        auto& gk = g.blocks[bi];
        const auto& bc = cache.blocks[bi];
        // channel MLP residual
        Tensor2 dmod(B, 4 * h);
        Tensor2 dm1, da1, dv, dn, dtmp;
        ops::linear_backward(bc.m1, k.fc2_w, dh, gk.fc2_w, gk.fc2_b, &dm1);
        ops::mish_backward(bc.a1, dm1, da1);
        ops::linear_backward(bc.v, k.fc1_w, da1, gk.fc1_w, gk.fc1_b, &dv);
        detail::modulate_backward(bc.n2, bc.mod, 2 * h, 3 * h, n, dv, dmod, dn);
        ops::layernorm_backward(bc.ln2_xhat, bc.ln2_is, k.ln2_g, dn, gk.ln2_g, gk.ln2_b, dtmp);
        ops::add_inplace(dh, dtmp);
        // token mixing residual
        Tensor2 du;
        detail::token_mix_backward(bc.u, k.mix_w, dh, B, n, gk.mix_w, gk.mix_b, du);
        detail::modulate_backward(bc.n1, bc.mod, 0, h, n, du, dmod, dn);
        ops::layernorm_backward(bc.ln1_xhat, bc.ln1_is, k.ln1_g, dn, gk.ln1_g, gk.ln1_b, dtmp);
        ops::add_inplace(dh, dtmp);
        // conditioning modulation
        Tensor2 dz_part;
        ops::linear_backward(cache.z, k.mod_w, dmod, gk.mod_w, gk.mod_b, &dz_part);
        ops::add_inplace(dz, dz_part);
    }
    detail::sum_per_sample(dh, n, dz);
    for (std::size_t r = 0; r < dh.rows(); ++r) {
        float* gp = g.pos.data() + (r % n) * h;
        const float* dr = dh.data() + r * h;
        for (std::size_t c = 0; c < h; ++c) gp[c] += dr[c];
    }
    ops::linear_backward(cache.tokens, p.in_w, dh, g.in_w, g.in_b, nullptr);
    mlp_backward_into(p.cond, cache.cond_cache, dz, g.cond);
}

}  // namespace prpl
