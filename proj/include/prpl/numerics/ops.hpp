#pragma once

// Row-batched kernels shared by the MLP and the sequence denoiser. Matrix products go through
// Eigen's single-threaded GEMM; everything else is plain loops.

#include <cmath>
#include <span>

#include <Eigen/Core>

#include "prpl/numerics/tensor.hpp"

namespace prpl::ops {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

inline ConstMatMap as_matrix(const Tensor2& t) {
    return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}
inline MatMap as_matrix(Tensor2& t) {
    return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

/// y = x W + b, W stored (in x out), b stored (1 x out).
inline void linear_forward(const Tensor2& x, const Tensor2& w, const Tensor2& b, Tensor2& y) {
    const std::size_t in = x.cols();
    if (w.rows() != in)
        fail(ErrorKind::contract,
             "linear: input width " + std::to_string(in) + " != weight rows " + std::to_string(w.rows()));
    y = Tensor2(x.rows(), w.cols());
    auto ym = as_matrix(y);
    ym.noalias() = as_matrix(x) * as_matrix(w);
    ym.rowwise() += as_matrix(b).row(0);
}

/// Accumulates dW += x^T dy, db += colsum(dy) and (optionally) writes dx = dy W^T.
inline void linear_backward(const Tensor2& x, const Tensor2& w, const Tensor2& dy, Tensor2& dw, Tensor2& db,
                            Tensor2* dx) {
    const auto dym = as_matrix(dy);
    as_matrix(dw).noalias() += as_matrix(x).transpose() * dym;
    as_matrix(db).row(0) += dym.colwise().sum();
    if (!dx) return;
    *dx = Tensor2(x.rows(), x.cols());
    as_matrix(*dx).noalias() = dym * as_matrix(w).transpose();
}

inline float softplus(float x) { return x > 20.0f ? x : std::log1p(std::exp(x)); }

// mish(x) = x tanh(softplus(x)) = x n / (n + 2) with n = e^x (e^x + 2); one exponential.
inline constexpr float kMishLinear = 15.0f;

inline float mish(float x) {
    if (x > kMishLinear) return x;
    const float e = std::exp(x);
    const float n = e * (e + 2.0f);
    return x * n / (n + 2.0f);
}

/// d mish / dx = t + x dt/dx with t = n / (n + 2), dt/dx = 4 e^x (e^x + 1) / (n + 2)^2.
inline float mish_grad(float x) {
    if (x > kMishLinear) return 1.0f;
    const float e = std::exp(x);
    const float n = e * (e + 2.0f);
    const float den = n + 2.0f;
    return n / den + x * 4.0f * e * (e + 1.0f) / (den * den);
}

inline void mish_forward(const Tensor2& x, Tensor2& y) {
    y = Tensor2(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = mish(x[i]);
}

inline void mish_backward(const Tensor2& x, const Tensor2& dy, Tensor2& dx) {
    dx = Tensor2(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] = dy[i] * mish_grad(x[i]);
}

inline void tanh_forward(const Tensor2& x, Tensor2& y) {
    y = Tensor2(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
}

inline void tanh_backward(const Tensor2& y, const Tensor2& dy, Tensor2& dx) {
    dx = Tensor2(y.rows(), y.cols());
    for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * (1.0f - y[i] * y[i]);
}

inline constexpr float kLayerNormEps = 1e-5f;

/// Per-row normalization followed by an elementwise affine map (gain, bias are 1 x cols).
/// `xhat` and `inv_std` are kept for the backward pass.
inline void layernorm_forward(const Tensor2& x, const Tensor2& gain, const Tensor2& bias, Tensor2& y,
                              Tensor2& xhat, std::vector<float>& inv_std) {
    const std::size_t n = x.rows(), c = x.cols();
    y = Tensor2(n, c);
    xhat = Tensor2(n, c);
    inv_std.assign(n, 0.0f);
    for (std::size_t r = 0; r < n; ++r) {
        const float* xr = x.data() + r * c;
        float mean = 0.0f;
        for (std::size_t j = 0; j < c; ++j) mean += xr[j];
        mean /= static_cast<float>(c);
        float var = 0.0f;
        for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= static_cast<float>(c);
        const float is = 1.0f / std::sqrt(var + kLayerNormEps);
        inv_std[r] = is;
        for (std::size_t j = 0; j < c; ++j) {
            const float h = (xr[j] - mean) * is;
            xhat(r, j) = h;
            y(r, j) = h * gain[j] + bias[j];
        }
    }
}

inline void layernorm_backward(const Tensor2& xhat, const std::vector<float>& inv_std, const Tensor2& gain,
                               const Tensor2& dy, Tensor2& dgain, Tensor2& dbias, Tensor2& dx) {
    const std::size_t n = xhat.rows(), c = xhat.cols();
    dx = Tensor2(n, c);
    for (std::size_t r = 0; r < n; ++r) {
        float sum_dh = 0.0f, sum_dh_h = 0.0f;
        for (std::size_t j = 0; j < c; ++j) {
            const float g = dy(r, j);
            dgain[j] += g * xhat(r, j);
            dbias[j] += g;
            const float dh = g * gain[j];
            sum_dh += dh;
            sum_dh_h += dh * xhat(r, j);
        }
        const float inv_c = 1.0f / static_cast<float>(c);
        for (std::size_t j = 0; j < c; ++j) {
            const float dh = dy(r, j) * gain[j];
            dx(r, j) = inv_std[r] * (dh - inv_c * sum_dh - xhat(r, j) * inv_c * sum_dh_h);
        }
    }
}

inline void add_inplace(Tensor2& a, const Tensor2& b) {
    require_same_shape(a, b, "add");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

}  // namespace prpl::ops
