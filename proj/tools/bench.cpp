// Parallel kernels against the serial reference implementations.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include <omp.h>

#include "tracediff/kernels.hpp"
#include "tracediff/reference.hpp"
#include "tracediff/rng.hpp"

using namespace tracediff;

namespace {

double time_ms(const std::function<void()>& f, int reps) {
    f();
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) f();
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() / reps;
}

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

void report(const char* name, double ref_ms, double par_ms, double diff) {
    std::printf("%-16s reference %9.3f ms  parallel %9.3f ms  speedup %5.2fx  max|diff| %.2e\n", name, ref_ms,
                par_ms, ref_ms / par_ms, diff);
}

}  // namespace

int main() {
    std::printf("threads: %d\n", omp_get_max_threads());
    Rng rng(42);
    const int h = 256, w = 256, c = 16;

    {
        const auto src = random_vec(rng, std::size_t(c) * h * w, 0.0, 1.0);
        const auto disp = random_vec(rng, 2u * h * w, -3.0, 3.0);
        std::vector<double> a(src.size()), b(src.size());
        const double r = time_ms([&] { reference::resample(src, c, h, w, disp, a); }, 5);
        const double p = time_ms([&] { kernels::resample(src, c, h, w, disp, b); }, 5);
        report("resample", r, p, max_abs_diff(a, b));
    }
    {
        const int cin = 16, cout = 16, hh = 128, ww = 128;
        const auto in = random_vec(rng, std::size_t(cin) * hh * ww, -1.0, 1.0);
        const auto wt = random_vec(rng, std::size_t(cout) * cin * 9, -0.3, 0.3);
        const auto bias = random_vec(rng, cout, -0.1, 0.1);
        std::vector<double> a(std::size_t(cout) * hh * ww), b(a.size());
        const double r = time_ms([&] { reference::conv2d_forward(in, cin, hh, ww, wt, bias, cout, 3, a); }, 3);
        const double p = time_ms([&] { kernels::conv2d_forward(in, cin, hh, ww, wt, bias, cout, 3, b); }, 3);
        report("conv2d 3x3", r, p, max_abs_diff(a, b));
    }
    {
        const int n = 128 * 128, bins = 32;
        const auto wa = random_vec(rng, std::size_t(n) * bins, 0.0, 1.0);
        const auto wb = random_vec(rng, std::size_t(n) * bins, 0.0, 1.0);
        std::vector<double> a(bins * bins), b(bins * bins);
        const double r = time_ms([&] { reference::joint_histogram(wa, wb, n, bins, a); }, 5);
        const double p = time_ms([&] { kernels::joint_histogram(wa, wb, n, bins, b); }, 5);
        report("joint_histogram", r, p, max_abs_diff(a, b));
    }
    return 0;
}
