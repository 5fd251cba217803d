#pragma once

// Scalar and two-channel pixel grids plus the sampling primitives shared by
// every other module.
//
// Coordinates are (x, y) = (column, row) with the origin at the centre of
// pixel (0, 0). Sampling clamps coordinates to [0, dim - 1] (border
// replication), so every lookup is total.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tracediff {

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct Point {
    double x = 0.0;
    double y = 0.0;
};

class Image2D {
public:
    Image2D() = default;
    Image2D(int height, int width, float fill = 0.0f);
    Image2D(int height, int width, std::vector<float> data);

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    float& operator()(int row, int col) { return data_[static_cast<std::size_t>(row) * width_ + col]; }
    float operator()(int row, int col) const { return data_[static_cast<std::size_t>(row) * width_ + col]; }

    std::span<float> data() { return data_; }
    std::span<const float> data() const { return data_; }
    const std::vector<float>& values() const { return data_; }

    bool same_shape(const Image2D& other) const {
        return height_ == other.height_ && width_ == other.width_;
    }

    bool operator==(const Image2D&) const = default;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<float> data_;
};

// Two channels: channel 0 holds the x (column) component, channel 1 the
// y (row) component.
class VectorField2D {
public:
    VectorField2D() = default;
    VectorField2D(int height, int width);
    VectorField2D(Image2D ux, Image2D uy);

    int height() const { return ux_.height(); }
    int width() const { return ux_.width(); }

    Image2D& channel(int c) { return c == 0 ? ux_ : uy_; }
    const Image2D& channel(int c) const { return c == 0 ? ux_ : uy_; }
    Image2D& ux() { return ux_; }
    Image2D& uy() { return uy_; }
    const Image2D& ux() const { return ux_; }
    const Image2D& uy() const { return uy_; }

    Point at(int row, int col) const { return {ux_(row, col), uy_(row, col)}; }

    bool same_shape(const Image2D& img) const { return ux_.same_shape(img); }
    bool same_shape(const VectorField2D& other) const { return ux_.same_shape(other.ux_); }

    bool operator==(const VectorField2D&) const = default;

private:
    Image2D ux_;
    Image2D uy_;
};

bool all_finite(const Image2D& img);
bool all_finite(const VectorField2D& field);

// Bilinear interpolation with border replication.
float bilinear_sample(const Image2D& img, Point p);

// output(p) = img(p + disp(p)).
Image2D warp(const Image2D& img, const VectorField2D& displacement);

// Forward differences; the trailing row/column get a zero gradient.
VectorField2D spatial_gradient(const Image2D& field);

}  // namespace tracediff
