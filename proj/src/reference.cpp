#include "tracediff/reference.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace tracediff::reference {

namespace {

double pixel(std::span<const double> plane, int height, int width, int row, int col) {
    row = std::clamp(row, 0, height - 1);
    col = std::clamp(col, 0, width - 1);
    return plane[static_cast<std::size_t>(row) * width + col];
}

}  // namespace

void resample(std::span<const double> src, int channels, int height, int width,
              std::span<const double> disp, std::span<double> out) {
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    for (int c = 0; c < channels; ++c) {
        const auto img = src.subspan(c * plane, plane);
        for (int row = 0; row < height; ++row) {
            for (int col = 0; col < width; ++col) {
                const std::size_t idx = static_cast<std::size_t>(row) * width + col;
                const double px = std::clamp(col + disp[idx], 0.0, width - 1.0);
                const double py = std::clamp(row + disp[plane + idx], 0.0, height - 1.0);
                const int qx = static_cast<int>(std::floor(px));
                const int qy = static_cast<int>(std::floor(py));
                double acc = 0.0;
                for (int dy = 0; dy <= 1; ++dy) {
                    for (int dx = 0; dx <= 1; ++dx) {
                        const double w = (1.0 - std::abs(px - (qx + dx))) *
                                         (1.0 - std::abs(py - (qy + dy)));
                        if (w == 0.0) continue;
                        acc += w * pixel(img, height, width, qy + dy, qx + dx);
                    }
                }
                out[c * plane + idx] = acc;
            }
        }
    }
}

void conv2d_forward(std::span<const double> in, int cin, int height, int width,
                    std::span<const double> weight, std::span<const double> bias, int cout,
                    int ksize, std::span<double> out) {
    const int pad = ksize / 2;
    for (int co = 0; co < cout; ++co) {
        for (int row = 0; row < height; ++row) {
            for (int col = 0; col < width; ++col) {
                double acc = bias.empty() ? 0.0 : bias[co];
                for (int ci = 0; ci < cin; ++ci) {
                    for (int ky = 0; ky < ksize; ++ky) {
                        for (int kx = 0; kx < ksize; ++kx) {
                            const int r = row + ky - pad;
                            const int c = col + kx - pad;
                            if (r < 0 || r >= height || c < 0 || c >= width) continue;
                            acc += weight[((static_cast<std::size_t>(co) * cin + ci) * ksize + ky) * ksize + kx] *
                                   in[(static_cast<std::size_t>(ci) * height + r) * width + c];
                        }
                    }
                }
                out[(static_cast<std::size_t>(co) * height + row) * width + col] = acc;
            }
        }
    }
}

void joint_histogram(std::span<const double> wa, std::span<const double> wb, int n_pixels,
                     int bins, std::span<double> joint) {
    for (int i = 0; i < bins; ++i) {
        for (int j = 0; j < bins; ++j) {
            double acc = 0.0;
            for (int n = 0; n < n_pixels; ++n) {
                acc += wa[static_cast<std::size_t>(n) * bins + i] * wb[static_cast<std::size_t>(n) * bins + j];
            }
            joint[static_cast<std::size_t>(i) * bins + j] = acc / n_pixels;
        }
    }
}

}  // namespace tracediff::reference
