#include <doctest.h>

#include <set>

#include "tracediff/rng.hpp"
#include "tracediff/structure.hpp"

using namespace tracediff;

TEST_CASE("two-level image is recovered exactly") {
    Image2D img(10, 10, 0.2f);
    for (int r = 3; r < 7; ++r)
        for (int c = 2; c < 8; ++c) img(r, c) = 0.8f;
    const ContourMap m = cluster_to_contours(img, 2, 1);
    CHECK(m.levels.size() == 2);
    CHECK(m.levels[0] == doctest::Approx(0.2).epsilon(1e-6));
    CHECK(m.levels[1] == doctest::Approx(0.8).epsilon(1e-6));
    CHECK(m.render() == img);
    for (int r = 0; r < 10; ++r)
        for (int c = 0; c < 10; ++c) CHECK(m.label(r, c) == (img(r, c) > 0.5f ? 1 : 0));
}

TEST_CASE("bimodal mixture agrees with an exhaustive threshold sweep") {
    Rng rng(3);
    Image2D img(40, 40);
    for (float& v : img.data()) v = static_cast<float>(rng.uniform() < 0.4 ? rng.normal(0.7, 0.05) : rng.normal(0.3, 0.05));
    const ContourMap m = cluster_to_contours(img, 2, 5);

    // oracle: the threshold minimising within-class squared error
    std::vector<float> vals(img.data().begin(), img.data().end());
    std::sort(vals.begin(), vals.end());
    double best = 1e300, thr = 0.5;
    for (std::size_t i = 1; i < vals.size(); ++i) {
        double s0 = 0, s1 = 0, q0 = 0, q1 = 0;
        for (std::size_t j = 0; j < vals.size(); ++j) {
            (j < i ? s0 : s1) += vals[j];
            (j < i ? q0 : q1) += double(vals[j]) * vals[j];
        }
        const double sse = q0 - s0 * s0 / i + q1 - s1 * s1 / (vals.size() - i);
        if (sse < best) {
            best = sse;
            thr = 0.5 * (vals[i - 1] + vals[i]);
        }
    }
    int agree = 0;
    for (int r = 0; r < 40; ++r)
        for (int c = 0; c < 40; ++c) agree += m.label(r, c) == (img(r, c) > thr ? 1 : 0);
    CHECK(agree >= 0.99 * img.size());
    CHECK(m.levels[0] < thr);
    CHECK(m.levels[1] > thr);

    // idempotent on its own rendering
    const ContourMap again = cluster_to_contours(m.render(), 2, 9);
    CHECK(again.labels == m.labels);
    const Image2D rendered = m.render();
    std::set<float> distinct(rendered.data().begin(), rendered.data().end());
    CHECK(distinct.size() <= 2);
    CHECK(cluster_to_contours(img, 2, 5) == m);
}

TEST_CASE("degenerate input and cluster bounds") {
    CHECK_THROWS_AS(cluster_to_contours(Image2D(5, 5, 0.4f), 2), DegenerateInputError);
    CHECK(cluster_to_contours(Image2D(5, 5, 0.4f), 1).levels.size() == 1);
    CHECK_THROWS(cluster_to_contours(Image2D(5, 5, 0.4f), 5));
    CHECK_THROWS(cluster_to_contours(Image2D(5, 5, 0.4f), 0));
}

TEST_CASE("level transfer by role") {
    // bright disc on dark border -> dark disc on bright border
    Image2D img(9, 9, 0.1f);
    for (int r = 3; r < 6; ++r)
        for (int c = 3; c < 6; ++c) img(r, c) = 0.9f;
    const ContourMap m = cluster_to_contours(img, 2, 0);
    const std::vector<double> roles = role_levels(m);
    CHECK(roles[0] == doctest::Approx(0.1).epsilon(1e-6));
    CHECK(roles[1] == doctest::Approx(0.9).epsilon(1e-6));
    const ContourMap t = transfer_levels(m, {0.8, 0.3});
    const Image2D out = t.render();
    CHECK(out(0, 0) == doctest::Approx(0.8f));
    CHECK(out(4, 4) == doctest::Approx(0.3f));
    CHECK(t.levels[0] < t.levels[1]);
}
