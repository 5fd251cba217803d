#include <doctest.h>

#include <cmath>

#include "tracediff/similarity.hpp"
#include "tracediff/rng.hpp"

using namespace tracediff;

namespace {

Image2D random_image(Rng& rng, int h, int w, double lo = 0.0, double hi = 1.0) {
    Image2D img(h, w);
    for (float& v : img.data()) v = static_cast<float>(rng.uniform(lo, hi));
    return img;
}

// Direct per-pixel kernel accumulation.
std::vector<double> brute_joint(const Image2D& a, const Image2D& b, const ParzenConfig& cfg) {
    const int n = cfg.bins;
    std::vector<double> joint(n * n, 0.0);
    auto weights = [&](double v) {
        v = std::clamp(v, cfg.lo, cfg.hi);
        std::vector<double> w(n);
        double s = 0.0;
        for (int i = 0; i < n; ++i) {
            const double d = (v - cfg.centre(i)) / cfg.sigma();
            w[i] = std::exp(-0.5 * d * d);
            s += w[i];
        }
        for (double& x : w) x /= s;
        return w;
    };
    for (std::size_t p = 0; p < a.size(); ++p) {
        const auto wa = weights(a.data()[p]);
        const auto wb = weights(b.data()[p]);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) joint[i * n + j] += wa[i] * wb[j] / a.size();
    }
    return joint;
}

double brute_mi(const Image2D& a, const Image2D& b, const ParzenConfig& cfg) {
    const int n = cfg.bins;
    const auto joint = brute_joint(a, b, cfg);
    std::vector<double> pa(n, 0.0), pb(n, 0.0);
    double hab = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double p = joint[i * n + j];
            pa[i] += p;
            pb[j] += p;
            if (p > 0) hab -= p * std::log(p);
        }
    double ha = 0.0, hb = 0.0;
    for (int i = 0; i < n; ++i) {
        if (pa[i] > 0) ha -= pa[i] * std::log(pa[i]);
        if (pb[i] > 0) hb -= pb[i] * std::log(pb[i]);
    }
    return (ha + hb) / hab;
}

}  // namespace

TEST_CASE("joint histogram") {
    ParzenConfig cfg;
    const Image2D half(4, 4, 0.5f);
    const Histogram j = joint_parzen_histogram(half, half, cfg);
    CHECK(j.total() == doctest::Approx(1.0).epsilon(1e-12));
    int peak_i = 0, peak_j = 0;
    for (int i = 0; i < cfg.bins; ++i)
        for (int k = 0; k < cfg.bins; ++k) {
            CHECK(j(i, k) == doctest::Approx(j(k, i)).epsilon(1e-14));
            if (j(i, k) > j(peak_i, peak_j)) {
                peak_i = i;
                peak_j = k;
            }
        }
    CHECK(std::abs(cfg.centre(peak_i) - 0.5) <= cfg.bin_width());
    CHECK(peak_i == peak_j);

    Rng rng(1);
    const Image2D a = random_image(rng, 8, 8), b = random_image(rng, 8, 8);
    const Histogram ab = joint_parzen_histogram(a, b, cfg);
    const Histogram ma = marginal(ab, 1), mb = marginal(ab, 0);
    const Histogram ha = parzen_histogram(a, cfg), hb = parzen_histogram(b, cfg);
    for (int i = 0; i < cfg.bins; ++i) {
        CHECK(std::abs(ma.p[i] - ha.p[i]) < 1e-9);
        CHECK(std::abs(mb.p[i] - hb.p[i]) < 1e-9);
    }

    ParzenConfig eight;
    eight.bins = 8;
    const auto oracle = brute_joint(a, b, eight);
    const Histogram j8 = joint_parzen_histogram(a, b, eight);
    for (std::size_t i = 0; i < oracle.size(); ++i) CHECK(std::abs(j8.p[i] - oracle[i]) < 1e-10);

    CHECK_THROWS(joint_parzen_histogram(a, Image2D(8, 7), cfg));
    ParzenConfig one;
    one.bins = 1;
    CHECK_THROWS(joint_parzen_histogram(a, b, one));
}

TEST_CASE("entropy") {
    CHECK(entropy(Histogram{1, 3, {0.0, 1.0, 0.0}}) == 0.0);
    CHECK(entropy(Histogram{1, 5, std::vector<double>(5, 0.2)}) == doctest::Approx(std::log(5.0)).epsilon(1e-14));
    CHECK(entropy(Histogram{1, 3, {0.5, 0.3, 0.2}}) == doctest::Approx(1.0297).epsilon(5e-5));
}

TEST_CASE("mutual information") {
    Rng rng(2);
    const ParzenConfig cfg;
    const Image2D a = random_image(rng, 100, 100);
    const double self = mi_loss(a, a, cfg).value;
    CHECK(self == doctest::Approx(brute_mi(a, a, cfg)).epsilon(1e-10));
    CHECK(self > 1.0);
    CHECK(self <= 2.0);

    const Image2D b = random_image(rng, 100, 100);
    CHECK(mi_loss(a, b, cfg).value == doctest::Approx(1.0).epsilon(0.05));

    // self-similarity beats independent noise in >= 95% of draws
    int wins = 0;
    for (int t = 0; t < 50; ++t) {
        const Image2D x = random_image(rng, 12, 12), y = random_image(rng, 12, 12);
        wins += mi_loss(x, x, cfg).value >= mi_loss(x, y, cfg).value;
    }
    CHECK(wins >= 48);

    ParzenConfig narrow;
    narrow.window_sigma = 1e-3;
    const Image2D flat(6, 6, static_cast<float>(narrow.centre(5)));
    CHECK_THROWS_AS(mi_loss(flat, flat, narrow), DegenerateEntropyError);
}

TEST_CASE("mi gradient against central differences on 6x6") {
    Rng rng(3);
    const Image2D fixed = random_image(rng, 6, 6, 0.1, 0.9);
    Image2D moving = random_image(rng, 6, 6, 0.1, 0.9);
    const MiResult r = mi_loss(fixed, moving);
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < moving.size(); ++i) {
        const float x0 = moving.data()[i];
        const float h = 1e-4f;
        moving.data()[i] = x0 + h;
        const double fp = mi_loss(fixed, moving).value;
        moving.data()[i] = x0 - h;
        const double fm = mi_loss(fixed, moving).value;
        moving.data()[i] = x0;
        const double fd = (fp - fm) / (double(x0 + h) - double(x0 - h));
        diff = std::max(diff, std::abs(fd - r.gradient.data()[i]));
        scale = std::max(scale, std::abs(fd));
    }
    CHECK(diff / scale < 1e-4);
}

TEST_CASE("data loss") {
    Rng rng(4);
    const Image2D x = random_image(rng, 16, 16);
    const VectorField2D zero(16, 16);
    const double self = mi_loss(x, x).value;
    CHECK(data_loss(x, x, zero, zero).value == doctest::Approx(2.0 * self).epsilon(1e-12));

    const Image2D y = random_image(rng, 16, 16);
    VectorField2D v(16, 16), vi(16, 16);
    for (float& e : v.ux().data()) e = static_cast<float>(rng.uniform(-1, 1));
    for (float& e : vi.uy().data()) e = static_cast<float>(rng.uniform(-1, 1));
    CHECK(data_loss(x, y, v, vi).value == doctest::Approx(data_loss(y, x, vi, v).value).epsilon(1e-12));
}

TEST_CASE("feature alignment") {
    ad::Tensor a({2, 3, 3}, 0.4), ones({2, 3, 3}, 1.0), zeros({2, 3, 3}, 0.0);
    CHECK(feature_alignment_loss(a, a) == 0.0);
    CHECK(feature_alignment_loss(zeros, ones) == 1.0);
    Rng rng(5);
    ad::Tensor p({1, 4, 4}), q({1, 4, 4});
    double expect = 0.0;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
        p.data[i] = rng.normal();
        q.data[i] = rng.normal();
        expect += (p.data[i] - q.data[i]) * (p.data[i] - q.data[i]) / p.data.size();
    }
    CHECK(feature_alignment_loss(p, q) == doctest::Approx(expect).epsilon(1e-14));
    CHECK_THROWS_AS(feature_alignment_loss(p, ad::Tensor({1, 4, 3})), ad::ShapeError);
}

TEST_CASE("bhattacharyya distance") {
    const Histogram p{1, 2, {1.0, 0.0}}, q{1, 2, {0.5, 0.5}}, r{1, 2, {0.0, 1.0}};
    CHECK(bhattacharyya_distance(q, q) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(bhattacharyya_distance(p, q) == doctest::Approx(0.3466).epsilon(5e-5));
    CHECK(bhattacharyya_distance(q, p) == doctest::Approx(bhattacharyya_distance(p, q)).epsilon(1e-15));
    CHECK(bhattacharyya_distance(p, r) == doctest::Approx(27.63).epsilon(5e-4));
    CHECK_THROWS(bhattacharyya_distance(p, Histogram{1, 3, {0.2, 0.3, 0.5}}));
}

TEST_CASE("simplified frechet distance") {
    Rng rng(6);
    const std::vector<Image2D> a = {random_image(rng, 5, 5), random_image(rng, 5, 5)};
    CHECK(simplified_frechet(a, a) == 0.0);
    std::vector<Image2D> shifted = a;
    for (Image2D& img : shifted)
        for (float& v : img.data()) v += 1.0f;
    CHECK(simplified_frechet(a, shifted) == doctest::Approx(1.0).epsilon(1e-6));

    // two-pass moments oracle with population standard deviations
    const std::vector<Image2D> b = {random_image(rng, 7, 3, 0.2, 0.9)};
    auto moments = [](const std::vector<Image2D>& set) {
        double n = 0, s = 0;
        for (const auto& img : set)
            for (float v : img.data()) {
                s += v;
                ++n;
            }
        const double m = s / n;
        double ss = 0;
        for (const auto& img : set)
            for (float v : img.data()) ss += (v - m) * (v - m);
        return std::pair{m, std::sqrt(ss / n)};
    };
    const auto [ma, sa] = moments(a);
    const auto [mb, sb] = moments(b);
    CHECK(simplified_frechet(a, b) == doctest::Approx((ma - mb) * (ma - mb) + (sa - sb) * (sa - sb)).epsilon(1e-9));
    CHECK_THROWS(simplified_frechet({}, b));
}
