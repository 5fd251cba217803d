#pragma once

// Serial, loop-per-definition versions of the kernels in kernels.hpp. They
// are intentionally naive: tests compare the parallel kernels against them and
// the benchmark reports the speedup.

#include <span>

namespace tracediff::reference {

void resample(std::span<const double> src, int channels, int height, int width,
              std::span<const double> disp, std::span<double> out);

void conv2d_forward(std::span<const double> in, int cin, int height, int width,
                    std::span<const double> weight, std::span<const double> bias, int cout,
                    int ksize, std::span<double> out);

void joint_histogram(std::span<const double> wa, std::span<const double> wb, int n_pixels,
                     int bins, std::span<double> joint);

}  // namespace tracediff::reference
