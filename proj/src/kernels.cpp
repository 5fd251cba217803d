#include "tracediff/kernels.hpp"

#include <vector>

namespace tracediff::kernels {

namespace {

template <class T>
void resample_impl(std::span<const T> src, int channels, int height, int width,
                   std::span<const T> disp, std::span<T> out) {
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    const T* dx = disp.data();
    const T* dy = disp.data() + plane;
#pragma omp parallel for schedule(static)
    for (int row = 0; row < height; ++row) {
        for (int col = 0; col < width; ++col) {
            const std::size_t idx = static_cast<std::size_t>(row) * width + col;
            const Stencil s = make_stencil(col + static_cast<double>(dx[idx]),
                                           row + static_cast<double>(dy[idx]), height, width);
            for (int c = 0; c < channels; ++c) {
                out[c * plane + idx] = static_cast<T>(sample(src.data() + c * plane, width, s));
            }
        }
    }
}

std::vector<double> pad_planes(std::span<const double> in, int channels, int height, int width,
                               int pad) {
    const int ph = height + 2 * pad;
    const int pw = width + 2 * pad;
    std::vector<double> padded(static_cast<std::size_t>(channels) * ph * pw, 0.0);
    for (int c = 0; c < channels; ++c) {
        for (int row = 0; row < height; ++row) {
            const double* s = in.data() + (static_cast<std::size_t>(c) * height + row) * width;
            double* d = padded.data() + (static_cast<std::size_t>(c) * ph + row + pad) * pw + pad;
            std::copy(s, s + width, d);
        }
    }
    return padded;
}

}  // namespace

void resample(std::span<const float> src, int channels, int height, int width,
              std::span<const float> disp, std::span<float> out) {
    resample_impl<float>(src, channels, height, width, disp, out);
}

void resample(std::span<const double> src, int channels, int height, int width,
              std::span<const double> disp, std::span<double> out) {
    resample_impl<double>(src, channels, height, width, disp, out);
}

void resample_backward(std::span<const double> src, int channels, int height, int width,
                       std::span<const double> disp, std::span<const double> grad_out,
                       std::span<double> grad_src, std::span<double> grad_disp) {
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    const double* dx = disp.data();
    const double* dy = disp.data() + plane;

    if (!grad_disp.empty()) {
#pragma omp parallel for schedule(static)
        for (int row = 0; row < height; ++row) {
            for (int col = 0; col < width; ++col) {
                const std::size_t idx = static_cast<std::size_t>(row) * width + col;
                const Stencil s = make_stencil(col + dx[idx], row + dy[idx], height, width);
                double gx = 0.0;
                double gy = 0.0;
                for (int c = 0; c < channels; ++c) {
                    const double* p = src.data() + c * plane;
                    const double g = grad_out[c * plane + idx];
                    if (g == 0.0) continue;
                    const double v00 = p[s.y0 * width + s.x0];
                    const double v01 = p[s.y0 * width + s.x1];
                    const double v10 = p[s.y1 * width + s.x0];
                    const double v11 = p[s.y1 * width + s.x1];
                    if (!s.clamped_x) gx += g * ((1.0 - s.fy) * (v01 - v00) + s.fy * (v11 - v10));
                    if (!s.clamped_y) gy += g * ((1.0 - s.fx) * (v10 - v00) + s.fx * (v11 - v01));
                }
                grad_disp[idx] += gx;
                grad_disp[plane + idx] += gy;
            }
        }
    }

    if (!grad_src.empty()) {
        // Scatter-add; kept serial so accumulation order is fixed.
        for (int row = 0; row < height; ++row) {
            for (int col = 0; col < width; ++col) {
                const std::size_t idx = static_cast<std::size_t>(row) * width + col;
                const Stencil s = make_stencil(col + dx[idx], row + dy[idx], height, width);
                const double w00 = (1.0 - s.fx) * (1.0 - s.fy);
                const double w01 = s.fx * (1.0 - s.fy);
                const double w10 = (1.0 - s.fx) * s.fy;
                const double w11 = s.fx * s.fy;
                for (int c = 0; c < channels; ++c) {
                    const double g = grad_out[c * plane + idx];
                    double* gs = grad_src.data() + c * plane;
                    gs[s.y0 * width + s.x0] += g * w00;
                    gs[s.y0 * width + s.x1] += g * w01;
                    gs[s.y1 * width + s.x0] += g * w10;
                    gs[s.y1 * width + s.x1] += g * w11;
                }
            }
        }
    }
}

void conv2d_forward(std::span<const double> in, int cin, int height, int width,
                    std::span<const double> weight, std::span<const double> bias, int cout,
                    int ksize, std::span<double> out) {
    const int pad = ksize / 2;
    const int pw = width + 2 * pad;
    const int ph = height + 2 * pad;
    const std::vector<double> padded = pad_planes(in, cin, height, width, pad);
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    const int kk = ksize * ksize;

#pragma omp parallel for schedule(static)
    for (int co = 0; co < cout; ++co) {
        double* dst_plane = out.data() + co * plane;
        const double b = bias.empty() ? 0.0 : bias[co];
        std::fill(dst_plane, dst_plane + plane, b);
        for (int ci = 0; ci < cin; ++ci) {
            const double* wk = weight.data() + (static_cast<std::size_t>(co) * cin + ci) * kk;
            const double* src_plane = padded.data() + static_cast<std::size_t>(ci) * ph * pw;
            for (int ky = 0; ky < ksize; ++ky) {
                for (int kx = 0; kx < ksize; ++kx) {
                    const double w = wk[ky * ksize + kx];
                    for (int row = 0; row < height; ++row) {
                        const double* s = src_plane + (row + ky) * pw + kx;
                        double* d = dst_plane + row * width;
                        for (int col = 0; col < width; ++col) d[col] += w * s[col];
                    }
                }
            }
        }
    }
}

void conv2d_backward(std::span<const double> in, int cin, int height, int width,
                     std::span<const double> weight, int cout, int ksize,
                     std::span<const double> grad_out, std::span<double> grad_in,
                     std::span<double> grad_weight, std::span<double> grad_bias) {
    const int pad = ksize / 2;
    const int kk = ksize * ksize;
    const std::size_t plane = static_cast<std::size_t>(height) * width;

    if (!grad_bias.empty()) {
        for (int co = 0; co < cout; ++co) {
            const double* g = grad_out.data() + co * plane;
            double acc = 0.0;
            for (std::size_t i = 0; i < plane; ++i) acc += g[i];
            grad_bias[co] += acc;
        }
    }

    if (!grad_weight.empty()) {
        const int pw = width + 2 * pad;
        const int ph = height + 2 * pad;
        const std::vector<double> padded = pad_planes(in, cin, height, width, pad);
#pragma omp parallel for schedule(static)
        for (int co = 0; co < cout; ++co) {
            const double* g = grad_out.data() + co * plane;
            for (int ci = 0; ci < cin; ++ci) {
                const double* src_plane = padded.data() + static_cast<std::size_t>(ci) * ph * pw;
                double* gw = grad_weight.data() + (static_cast<std::size_t>(co) * cin + ci) * kk;
                for (int ky = 0; ky < ksize; ++ky) {
                    for (int kx = 0; kx < ksize; ++kx) {
                        double acc = 0.0;
                        for (int row = 0; row < height; ++row) {
                            const double* s = src_plane + (row + ky) * pw + kx;
                            const double* gr = g + row * width;
                            for (int col = 0; col < width; ++col) acc += gr[col] * s[col];
                        }
                        gw[ky * ksize + kx] += acc;
                    }
                }
            }
        }
    }

    if (!grad_in.empty()) {
        // Full correlation of the padded output gradient with the flipped kernel.
        const int gpad = ksize - 1 - pad;
        const int pw = width + 2 * gpad;
        const int ph = height + 2 * gpad;
        const std::vector<double> gpadded = pad_planes(grad_out, cout, height, width, gpad);
#pragma omp parallel for schedule(static)
        for (int ci = 0; ci < cin; ++ci) {
            double* dst_plane = grad_in.data() + ci * plane;
            for (int co = 0; co < cout; ++co) {
                const double* wk = weight.data() + (static_cast<std::size_t>(co) * cin + ci) * kk;
                const double* g_plane = gpadded.data() + static_cast<std::size_t>(co) * ph * pw;
                for (int ky = 0; ky < ksize; ++ky) {
                    for (int kx = 0; kx < ksize; ++kx) {
                        const double w = wk[ky * ksize + kx];
                        const int oy = ksize - 1 - ky;
                        const int ox = ksize - 1 - kx;
                        for (int row = 0; row < height; ++row) {
                            const double* s = g_plane + (row + oy) * pw + ox;
                            double* d = dst_plane + row * width;
                            for (int col = 0; col < width; ++col) d[col] += w * s[col];
                        }
                    }
                }
            }
        }
    }
}

void joint_histogram(std::span<const double> wa, std::span<const double> wb, int n_pixels,
                     int bins, std::span<double> joint) {
    const double inv_n = 1.0 / n_pixels;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < bins; ++i) {
        double* row = joint.data() + static_cast<std::size_t>(i) * bins;
        std::fill(row, row + bins, 0.0);
        for (int n = 0; n < n_pixels; ++n) {
            const double a = wa[static_cast<std::size_t>(n) * bins + i];
            if (a == 0.0) continue;
            const double* b = wb.data() + static_cast<std::size_t>(n) * bins;
            for (int j = 0; j < bins; ++j) row[j] += a * b[j];
        }
        for (int j = 0; j < bins; ++j) row[j] *= inv_n;
    }
}

}  // namespace tracediff::kernels
