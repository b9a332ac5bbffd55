#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "prpl/core/error.hpp"

namespace prpl {

/// Float storage aligned for the widest SIMD packet.
using AlignedFloats = std::vector<float, Eigen::aligned_allocator<float>>;

/// Dense row-major matrix of 32-bit floats. Rows index batch items, columns features.
class Tensor2 {
public:
    Tensor2() = default;
    Tensor2(std::size_t rows, std::size_t cols, float fill = 0.0f)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Tensor2(std::size_t rows, std::size_t cols, std::span<const float> data)
        : rows_(rows), cols_(cols), data_(data.begin(), data.end()) {
        require(data_.size() == rows_ * cols_, ErrorKind::contract,
                "tensor payload " + std::to_string(data_.size()) + " != " + std::to_string(rows_) + "x" +
                    std::to_string(cols_));
    }
    Tensor2(std::size_t rows, std::size_t cols, const std::vector<float>& data)
        : Tensor2(rows, cols, std::span<const float>(data)) {}

    static Tensor2 from_rows(std::initializer_list<std::initializer_list<float>> rows) {
        Tensor2 t;
        t.rows_ = rows.size();
        t.cols_ = rows.size() ? rows.begin()->size() : 0;
        for (const auto& r : rows) {
            require(r.size() == t.cols_, ErrorKind::contract, "ragged tensor literal");
            t.data_.insert(t.data_.end(), r.begin(), r.end());
        }
        return t;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    float& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    float operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
    float& operator[](std::size_t i) noexcept { return data_[i]; }
    float operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<float> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const float> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<float> span() noexcept { return data_; }
    std::span<const float> span() const noexcept { return data_; }
    float* data() noexcept { return data_.data(); }
    const float* data() const noexcept { return data_.data(); }
    std::vector<float> values() const { return {data_.begin(), data_.end()}; }

    void fill(float v) { std::fill(data_.begin(), data_.end(), v); }
    bool same_shape(const Tensor2& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
    }

    /// Reinterpret the payload with a new shape of equal element count.
    Tensor2 reshaped(std::size_t rows, std::size_t cols) const {
        require(rows * cols == data_.size(), ErrorKind::contract, "reshape changes element count");
        return Tensor2(rows, cols, data_);
    }

    Tensor2 slice_rows(std::size_t begin, std::size_t count) const {
        require(begin + count <= rows_, ErrorKind::contract, "row slice out of range");
        return Tensor2(count, cols_, std::span<const float>(data_.data() + begin * cols_, count * cols_));
    }

    friend bool operator==(const Tensor2& a, const Tensor2& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    AlignedFloats data_;
};

inline std::string shape_string(const Tensor2& t) {
    return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

inline void require_same_shape(const Tensor2& a, const Tensor2& b, const char* what) {
    if (!a.same_shape(b))
        fail(ErrorKind::contract, std::string(what) + ": shape " + shape_string(a) + " vs " + shape_string(b));
}

/// Squared Frobenius norm, accumulated in double.
inline double squared_norm(const Tensor2& t) {
    double acc = 0.0;
    for (float v : t.span()) acc += static_cast<double>(v) * v;
    return acc;
}

inline double max_abs_diff(const Tensor2& a, const Tensor2& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
    return m;
}

}  // namespace prpl
