#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "scram/errors.hpp"

namespace scram {

/// 2D pixel coordinate, 0-based, (row, column).
struct PixelIndex {
    int y = 0;
    int x = 0;

    friend bool operator==(PixelIndex a, PixelIndex b) { return a.y == b.y && a.x == b.x; }
    friend bool operator!=(PixelIndex a, PixelIndex b) { return !(a == b); }
};

/// Chebyshev (L-inf) distance between two pixel coordinates.
inline int chebyshev(PixelIndex a, PixelIndex b) {
    int dy = a.y > b.y ? a.y - b.y : b.y - a.y;
    int dx = a.x > b.x ? a.x - b.x : b.x - a.x;
    return dy > dx ? dy : dx;
}

/// An H x W raster of fixed-length feature vectors, row-major by
/// (y, x, channel). Storage is 32-bit float; accumulating code widens
/// to double.
class FieldImage {
public:
    FieldImage() = default;

    /// Zero-initialized field.
    FieldImage(int height, int width, int depth)
        : height_(height), width_(width), depth_(depth) {
        validate_dims();
        data_.assign(static_cast<std::size_t>(height_) * width_ * depth_, 0.0f);
    }

    /// Takes ownership of `data`; length and finiteness are checked.
    FieldImage(int height, int width, int depth, std::vector<float> data)
        : height_(height), width_(width), depth_(depth), data_(std::move(data)) {
        validate_dims();
        if (data_.size() != static_cast<std::size_t>(height_) * width_ * depth_) {
            throw DimensionError("FieldImage: data length does not match H*W*d");
        }
        for (float v : data_) {
            if (!std::isfinite(v)) {
                throw ArgumentError("FieldImage: non-finite scalar in field data");
            }
        }
    }

    int height() const { return height_; }
    int width() const { return width_; }
    int depth() const { return depth_; }
    int pixels() const { return height_ * width_; }

    bool in_bounds(PixelIndex p) const {
        return p.y >= 0 && p.y < height_ && p.x >= 0 && p.x < width_;
    }

    int row_major(PixelIndex p) const { return p.y * width_ + p.x; }
    PixelIndex from_row_major(int i) const { return {i / width_, i % width_}; }

    /// Feature vector of the pixel at (y, x).
    std::span<const float> at(int y, int x) const {
        return {data_.data() + (static_cast<std::size_t>(y) * width_ + x) * depth_,
                static_cast<std::size_t>(depth_)};
    }
    std::span<const float> at(PixelIndex p) const { return at(p.y, p.x); }

    /// Feature vector of the pixel with row-major index i.
    std::span<const float> at_linear(int i) const {
        return {data_.data() + static_cast<std::size_t>(i) * depth_,
                static_cast<std::size_t>(depth_)};
    }

    std::span<float> at_mut(int y, int x) {
        return {data_.data() + (static_cast<std::size_t>(y) * width_ + x) * depth_,
                static_cast<std::size_t>(depth_)};
    }

    const std::vector<float>& data() const { return data_; }
    std::vector<float>& data() { return data_; }
    const float* raw() const { return data_.data(); }

    bool same_shape(const FieldImage& o) const {
        return height_ == o.height_ && width_ == o.width_ && depth_ == o.depth_;
    }

private:
    void validate_dims() const {
        if (height_ < 1 || width_ < 1 || depth_ < 1) {
            throw DimensionError("FieldImage: dimensions must be >= 1");
        }
    }

    int height_ = 0;
    int width_ = 0;
    int depth_ = 0;
    std::vector<float> data_;
};

/// Result raster of an attention computation: one d_v vector per query
/// pixel (double precision), plus per-query diagnostics. `degenerate`
/// marks queries whose masked score row was empty; their output vector
/// is zero. `normalizer` (when filled) holds the per-query log-sum-exp
/// of the attended scores.
struct AttentionOutput {
    int height = 0;
    int width = 0;
    int depth = 0;
    std::vector<double> data;          // H*W*d_v, row-major
    std::vector<std::uint8_t> degenerate;  // H*W flags
    std::vector<double> normalizer;    // optional, H*W

    AttentionOutput() = default;
    AttentionOutput(int h, int w, int d)
        : height(h), width(w), depth(d),
          data(static_cast<std::size_t>(h) * w * d, 0.0),
          degenerate(static_cast<std::size_t>(h) * w, 0) {}

    int pixels() const { return height * width; }

    std::span<const double> at_linear(int i) const {
        return {data.data() + static_cast<std::size_t>(i) * depth,
                static_cast<std::size_t>(depth)};
    }
    std::span<double> at_linear_mut(int i) {
        return {data.data() + static_cast<std::size_t>(i) * depth,
                static_cast<std::size_t>(depth)};
    }

    /// Narrow to a float field (for file output).
    FieldImage to_field() const {
        std::vector<float> f(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) f[i] = static_cast<float>(data[i]);
        return FieldImage(height, width, depth, std::move(f));
    }
};

}  // namespace scram
