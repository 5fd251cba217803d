#pragma once

// Data-parallel inner loops. Each kernel parallelises over independent output
// elements only, so results are bit-identical for any thread count. The serial
// counterparts in reference.hpp are kept for testing and benchmarking.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>

namespace tracediff::kernels {

// Bilinear stencil with border replication.
struct Stencil {
    int x0, x1, y0, y1;
    double fx, fy;
    bool clamped_x, clamped_y;
};

inline Stencil make_stencil(double px, double py, int height, int width) {
    Stencil s{};
    const double max_x = width - 1;
    const double max_y = height - 1;
    // Coordinates on or beyond the border have a zero derivative.
    s.clamped_x = !(px > 0.0 && px < max_x);
    s.clamped_y = !(py > 0.0 && py < max_y);
    px = std::clamp(px, 0.0, max_x);
    py = std::clamp(py, 0.0, max_y);
    s.x0 = static_cast<int>(std::floor(px));
    s.y0 = static_cast<int>(std::floor(py));
    s.x1 = std::min(s.x0 + 1, width - 1);
    s.y1 = std::min(s.y0 + 1, height - 1);
    s.fx = px - s.x0;
    s.fy = py - s.y0;
    return s;
}

template <class T>
inline double sample(const T* src, int width, const Stencil& s) {
    const double v00 = src[static_cast<std::size_t>(s.y0) * width + s.x0];
    const double v01 = src[static_cast<std::size_t>(s.y0) * width + s.x1];
    const double v10 = src[static_cast<std::size_t>(s.y1) * width + s.x0];
    const double v11 = src[static_cast<std::size_t>(s.y1) * width + s.x1];
    const double top = v00 * (1.0 - s.fx) + v01 * s.fx;
    const double bottom = v10 * (1.0 - s.fx) + v11 * s.fx;
    return top * (1.0 - s.fy) + bottom * s.fy;
}

template <class T>
inline double sample_clamped(const T* src, int height, int width, double px, double py) {
    return sample(src, width, make_stencil(px, py, height, width));
}

// out[c](p) = src[c](p + disp(p)); disp holds the x plane then the y plane.
void resample(std::span<const float> src, int channels, int height, int width,
              std::span<const float> disp, std::span<float> out);
void resample(std::span<const double> src, int channels, int height, int width,
              std::span<const double> disp, std::span<double> out);

// Accumulates gradients of resample into grad_src and grad_disp. Either
// output span may be empty to skip it.
void resample_backward(std::span<const double> src, int channels, int height, int width,
                       std::span<const double> disp, std::span<const double> grad_out,
                       std::span<double> grad_src, std::span<double> grad_disp);

// Same-padded 2-D cross-correlation, kernel size 1 or 3. weight layout is
// [cout][cin][k][k].
void conv2d_forward(std::span<const double> in, int cin, int height, int width,
                    std::span<const double> weight, std::span<const double> bias, int cout,
                    int ksize, std::span<double> out);
void conv2d_backward(std::span<const double> in, int cin, int height, int width,
                     std::span<const double> weight, int cout, int ksize,
                     std::span<const double> grad_out, std::span<double> grad_in,
                     std::span<double> grad_weight, std::span<double> grad_bias);

// joint[i * bins + j] = sum_n wa[n * bins + i] * wb[n * bins + j] / n_pixels.
void joint_histogram(std::span<const double> wa, std::span<const double> wb, int n_pixels,
                     int bins, std::span<double> joint);

}  // namespace tracediff::kernels
