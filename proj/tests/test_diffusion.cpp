#include <doctest.h>

#include <cmath>

#include "tracediff/diffusion.hpp"

using namespace tracediff;

namespace {

Image2D filled(int h, int w, float v) { return Image2D(h, w, v); }

double mean_of(const Image2D& img) {
    double s = 0.0;
    for (float v : img.data()) s += v;
    return s / img.size();
}

}  // namespace

TEST_CASE("linear schedule") {
    const NoiseSchedule s = make_linear_schedule(2000, 1e-6, 1e-2);
    CHECK(s.steps() == 2000);
    CHECK(s.alpha[1] == doctest::Approx(0.999999).epsilon(1e-15));
    CHECK(s.alpha[2000] == doctest::Approx(0.99).epsilon(1e-15));
    CHECK(s.gamma[0] == 1.0);
    for (int k = 1; k <= 2000; ++k) {
        CHECK(std::abs(s.gamma[k] - s.gamma[k - 1] * s.alpha[k]) < 1e-12);
        CHECK(s.gamma[k] < s.gamma[k - 1]);
    }
    // cumulative-product oracle (40-digit arithmetic)
    CHECK(s.gamma[2000] == doctest::Approx(4.385978236133209e-05).epsilon(1e-10));
    CHECK(make_linear_schedule(200, 1e-6, 1e-2).gamma[200] == doctest::Approx(0.3666091833799321).epsilon(1e-10));

    CHECK(make_linear_schedule(1, 0.3, 0.3).gamma[1] == doctest::Approx(0.7));
    CHECK_THROWS(make_linear_schedule(0, 1e-6, 1e-2));
    CHECK_THROWS(make_linear_schedule(10, 1e-2, 1e-6));
    CHECK_THROWS(make_linear_schedule(10, 0.0, 1e-2));
    CHECK_THROWS(make_linear_schedule(10, 1e-6, 1.0));
}

TEST_CASE("strided schedule keeps gamma at the kept levels") {
    const NoiseSchedule s = make_linear_schedule(200, 1e-6, 0.1);
    const NoiseSchedule t = s.strided(10);
    CHECK(t.steps() == 20);
    for (int j = 1; j <= 20; ++j) CHECK(t.gamma[j] == doctest::Approx(s.gamma[10 * j]).epsilon(1e-12));
    CHECK_THROWS(s.strided(7));
}

TEST_CASE("forward marginal") {
    const NoiseSchedule s = make_linear_schedule(50, 1e-4, 0.05);
    Rng rng(1);
    const Image2D y0 = filled(4, 4, 0.6f);
    const Image2D eps = rng.normal_image(4, 4);
    CHECK(forward_marginal(y0, 0, eps, s) == y0);
    const Image2D z = forward_marginal(y0, 30, Image2D(4, 4), s);
    for (float v : z.data()) CHECK(v == doctest::Approx(std::sqrt(s.gamma[30]) * 0.6).epsilon(1e-6));
    CHECK_THROWS(forward_marginal(y0, 0, Image2D(3, 4), s));

    // moments over 10^4 pixels within 3 standard errors
    const int n = 100;
    const Image2D big = filled(n, n, 0.6f);
    const Image2D yk = forward_marginal(big, 30, rng.normal_image(n, n), s);
    const double m = mean_of(yk);
    double var = 0.0;
    for (float v : yk.data()) var += (v - m) * (v - m);
    var /= yk.size() - 1;
    const double mu = std::sqrt(s.gamma[30]) * 0.6;
    const double sd = std::sqrt(1.0 - s.gamma[30]);
    CHECK(std::abs(m - mu) < 3.0 * sd / n);
    CHECK(std::abs(var - sd * sd) < 3.0 * sd * sd * std::sqrt(2.0 / (n * n - 1)));
}

TEST_CASE("two single forward steps match the k=2 marginal in distribution") {
    const NoiseSchedule s = make_linear_schedule(10, 0.01, 0.2);
    Rng rng(2);
    const int n = 100;
    const Image2D y0 = filled(n, n, 0.4f);
    Image2D y2(n, n);
    for (std::size_t i = 0; i < y2.size(); ++i) {
        const double y1 = std::sqrt(s.alpha[1]) * 0.4 + std::sqrt(1.0 - s.alpha[1]) * rng.normal();
        y2.data()[i] = static_cast<float>(std::sqrt(s.alpha[2]) * y1 + std::sqrt(1.0 - s.alpha[2]) * rng.normal());
    }
    const double m = mean_of(y2);
    double var = 0.0;
    for (float v : y2.data()) var += (v - m) * (v - m);
    var /= y2.size() - 1;
    const double sd = std::sqrt(1.0 - s.gamma[2]);
    CHECK(std::abs(m - std::sqrt(s.gamma[2]) * 0.4) < 3.0 * sd / n);
    CHECK(std::abs(var - sd * sd) < 3.0 * sd * sd * std::sqrt(2.0 / (n * n - 1)));
}

TEST_CASE("noise source") {
    Rng a(9), b(9);
    const Image2D x0 = filled(8, 8, 0.3f);
    const NoiseSchedule s = make_linear_schedule(20, 1e-4, 0.1);
    CHECK(noise_source(x0, s, a) == noise_source(x0, s, b));
    Rng c(1);
    const Image2D near = noise_source(x0, make_linear_schedule(1, 1e-12, 1e-12), c);
    for (float v : near.data()) CHECK(v == doctest::Approx(0.3).epsilon(1e-4));
}

TEST_CASE("posterior") {
    const NoiseSchedule s = make_linear_schedule(2000, 1e-6, 1e-2);
    const Image2D y0 = filled(2, 2, 0.3f), yk = filled(2, 2, -0.7f);
    const PosteriorParams p1 = posterior_params(y0, yk, 1, s);
    CHECK(p1.sigma2 == 0.0);
    for (float v : p1.mu.data()) CHECK(v == doctest::Approx(0.3).epsilon(1e-6));

    const PosteriorParams zero = posterior_params(Image2D(2, 2), Image2D(2, 2), 7, s);
    for (float v : zero.mu.data()) CHECK(v == 0.0f);

    // 40-digit evaluation of the closed form at k = 5
    const PosteriorParams p5 = posterior_params(y0, yk, 5, s);
    CHECK(p5.mu(0, 0) == doctest::Approx(-0.3181741639494148).epsilon(1e-6));
    CHECK(p5.sigma2 == doctest::Approx(1.298674172309751e-05).epsilon(1e-9));
    CHECK_THROWS_AS(posterior_params(y0, yk, 0, s), std::out_of_range);
}

TEST_CASE("reverse step") {
    const NoiseSchedule s = make_linear_schedule(30, 1e-3, 0.05);
    Rng rng(3);
    const Image2D yk = rng.normal_image(4, 4);
    const Image2D r = reverse_step(yk, Image2D(4, 4), 12, s, Image2D(4, 4));
    for (std::size_t i = 0; i < r.size(); ++i) {
        CHECK(r.data()[i] == doctest::Approx(yk.data()[i] / std::sqrt(s.alpha[12])).epsilon(1e-6));
    }

    NoiseSchedule one;
    one.alpha = {1.0, 0.99};
    one.gamma = {1.0, 0.9};
    const Image2D v = reverse_step(filled(1, 1, 1.0f), filled(1, 1, 1.0f), 1, one, Image2D(1, 1));
    CHECK(v(0, 0) == doctest::Approx(0.9732557289510257).epsilon(1e-7));

    // inversion identity with the true noise
    const Image2D y0 = rng.normal_image(8, 8);
    const Image2D eps = rng.normal_image(8, 8);
    const Image2D noisy = forward_marginal(y0, 17, eps, s);
    const Image2D back = predict_clean(noisy, eps, 17, s);
    for (std::size_t i = 0; i < back.size(); ++i) CHECK(std::abs(back.data()[i] - y0.data()[i]) < 1e-5);

    CHECK_THROWS(reverse_step(yk, Image2D(4, 4), 0, s, Image2D(4, 4)));
    CHECK_THROWS(reverse_step(yk, Image2D(3, 4), 3, s, Image2D(4, 4)));
}

TEST_CASE("denoise loop") {
    const NoiseSchedule s = make_linear_schedule(1, 0.2, 0.2);
    const Image2D x0 = filled(4, 4, 0.5f);
    const NoiseModel zero = [](const Image2D&, const Image2D& noisy, double) { return Image2D(noisy.height(), noisy.width()); };

    // K = 1: one reverse step (z = 0) of the noised input
    Rng a(5), b(5);
    SamplerConfig one{1, ReverseNoise::Beta};
    const Image2D out = denoise_loop(x0, x0, zero, s, a, one);
    Rng chain(derive_seed(b.next_u64(), 0));
    const Image2D expect = reverse_step(noise_source(x0, s, chain), Image2D(4, 4), 1, s, Image2D(4, 4));
    CHECK(out == expect);

    Rng c(11), d(11);
    SamplerConfig many{6, ReverseNoise::Beta};
    CHECK(denoise_loop(x0, x0, zero, make_linear_schedule(10, 1e-3, 0.1), c, many) ==
          denoise_loop(x0, x0, zero, make_linear_schedule(10, 1e-3, 0.1), d, many));
}

TEST_CASE("denoise loop with a noise oracle converges as samples grow") {
    // The oracle knows x0 and returns the noise implied by the current iterate.
    const NoiseSchedule s = make_linear_schedule(20, 1e-3, 0.05);
    Rng img_rng(7);
    Image2D x0(16, 16);
    for (float& v : x0.data()) v = static_cast<float>(img_rng.uniform());
    const NoiseModel oracle = [&](const Image2D&, const Image2D& noisy, double gamma) {
        Image2D e(noisy.height(), noisy.width());
        for (std::size_t i = 0; i < e.size(); ++i) {
            e.data()[i] = static_cast<float>((noisy.data()[i] - std::sqrt(gamma) * x0.data()[i]) / std::sqrt(1.0 - gamma));
        }
        return e;
    };
    auto err = [&](int n, std::uint64_t seed) {
        Rng rng(seed);
        const Image2D out = denoise_loop(x0, x0, oracle, s, rng, {n, ReverseNoise::Posterior});
        double e = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) e += std::pow(out.data()[i] - x0.data()[i], 2);
        return std::sqrt(e / out.size());
    };
    double e10 = 0.0, e40 = 0.0;
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        e10 += err(10, seed);
        e40 += err(40, seed);
    }
    // sampling error scales as 1/sqrt(n): halves from 10 to 40
    CHECK(e40 / e10 == doctest::Approx(0.5).epsilon(0.2));
}

TEST_CASE("training loss") {
    const NoiseSchedule s = make_linear_schedule(20, 1e-3, 0.1);
    Rng rng(4);
    const Image2D y0 = filled(64, 64, 0.5f);
    const DifferentiableNoiseModel zero = [](ad::Tape& t, ad::Var, ad::Var noisy, double) {
        return t.constant(t.shape(noisy), std::vector<double>(t.shape(noisy).size(), 0.0));
    };
    double sum = 0.0;
    for (int i = 0; i < 20; ++i) sum += training_loss_in(y0, y0, zero, s, rng).loss;
    CHECK(sum / 20 == doctest::Approx(std::sqrt(2.0 / M_PI)).epsilon(0.01));

    // an oracle that recovers eps from the noisy input has zero loss
    const DifferentiableNoiseModel exact = [&](ad::Tape& t, ad::Var, ad::Var noisy, double gamma) {
        std::vector<double> e = t.value(noisy);
        for (double& v : e) v = (v - std::sqrt(gamma) * 0.5) / std::sqrt(1.0 - gamma);
        return t.constant(t.shape(noisy), e);
    };
    CHECK(training_loss_in(y0, y0, exact, s, rng).loss == doctest::Approx(0.0).epsilon(1e-5));
}
