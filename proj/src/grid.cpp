#include "tracediff/grid.hpp"

#include <cmath>

#include "tracediff/kernels.hpp"

namespace tracediff {

Image2D::Image2D(int height, int width, float fill)
    : height_(height), width_(width) {
    if (height < 0 || width < 0) throw DimensionError("negative image dimensions");
    data_.assign(static_cast<std::size_t>(height) * width, fill);
}

Image2D::Image2D(int height, int width, std::vector<float> data)
    : height_(height), width_(width), data_(std::move(data)) {
    if (height < 0 || width < 0) throw DimensionError("negative image dimensions");
    if (data_.size() != static_cast<std::size_t>(height) * width) {
        throw DimensionError("image data length " + std::to_string(data_.size()) +
                             " does not match " + std::to_string(height) + "x" +
                             std::to_string(width));
    }
}

VectorField2D::VectorField2D(int height, int width) : ux_(height, width), uy_(height, width) {}

VectorField2D::VectorField2D(Image2D ux, Image2D uy) : ux_(std::move(ux)), uy_(std::move(uy)) {
    if (!ux_.same_shape(uy_)) throw DimensionError("vector field channels differ in shape");
}

bool all_finite(const Image2D& img) {
    for (float v : img.data()) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

bool all_finite(const VectorField2D& field) {
    return all_finite(field.ux()) && all_finite(field.uy());
}

float bilinear_sample(const Image2D& img, Point p) {
    if (img.empty()) throw DimensionError("bilinear_sample on empty image");
    return static_cast<float>(
        kernels::sample_clamped(img.data().data(), img.height(), img.width(), p.x, p.y));
}

Image2D warp(const Image2D& img, const VectorField2D& displacement) {
    if (!displacement.same_shape(img)) {
        throw DimensionError("warp: image is " + std::to_string(img.height()) + "x" +
                             std::to_string(img.width()) + " but field is " +
                             std::to_string(displacement.height()) + "x" +
                             std::to_string(displacement.width()));
    }
    const int h = img.height();
    const int w = img.width();
    std::vector<float> disp;
    disp.reserve(2 * img.size());
    disp.insert(disp.end(), displacement.ux().data().begin(), displacement.ux().data().end());
    disp.insert(disp.end(), displacement.uy().data().begin(), displacement.uy().data().end());
    Image2D out(h, w);
    kernels::resample(img.data(), 1, h, w, disp, out.data());
    return out;
}

VectorField2D spatial_gradient(const Image2D& field) {
    const int h = field.height();
    const int w = field.width();
    if (h < 2 || w < 2) throw DimensionError("spatial_gradient needs at least 2x2 pixels");
    VectorField2D grad(h, w);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            grad.ux()(r, c) = c + 1 < w ? field(r, c + 1) - field(r, c) : 0.0f;
            grad.uy()(r, c) = r + 1 < h ? field(r + 1, c) - field(r, c) : 0.0f;
        }
    }
    return grad;
}

}  // namespace tracediff
