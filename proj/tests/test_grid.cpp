#include <doctest.h>

#include <filesystem>

#include "tracediff/grid.hpp"
#include "tracediff/grid_io.hpp"
#include "tracediff/rng.hpp"

using namespace tracediff;

namespace {

Image2D ramp_x(int h, int w, double scale) {
    Image2D img(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) img(r, c) = static_cast<float>(c * scale);
    return img;
}

Image2D random_image(Rng& rng, int h, int w) {
    Image2D img(h, w);
    for (float& v : img.data()) v = static_cast<float>(rng.uniform());
    return img;
}

std::filesystem::path temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "tracediff_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("bilinear sampling") {
    Rng rng(1);
    const Image2D img = random_image(rng, 4, 4);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) CHECK(bilinear_sample(img, {double(c), double(r)}) == img(r, c));

    const Image2D ramp = ramp_x(5, 8, 1.0 / 8);
    CHECK(bilinear_sample(ramp, {1.5, 2.0}) == doctest::Approx(1.5 / 8).epsilon(1e-7));

    // hand-expanded four-neighbour sum at (0.25, 0.75)
    const double expect = img(0, 0) * 0.75 * 0.25 + img(0, 1) * 0.25 * 0.25 + img(1, 0) * 0.75 * 0.75 +
                          img(1, 1) * 0.25 * 0.75;
    CHECK(bilinear_sample(img, {0.25, 0.75}) == doctest::Approx(expect).epsilon(1e-6));

    // border replication
    CHECK(bilinear_sample(img, {-3.0, -1.0}) == img(0, 0));
    CHECK(bilinear_sample(img, {9.0, 3.0}) == img(3, 3));
}

TEST_CASE("warp") {
    Rng rng(2);
    const Image2D img = random_image(rng, 6, 7);
    CHECK(warp(img, VectorField2D(6, 7)) == img);

    VectorField2D shift(6, 7);
    for (float& v : shift.ux().data()) v = 1.0f;
    const Image2D moved = warp(img, shift);
    for (int r = 0; r < 6; ++r) {
        for (int c = 0; c < 6; ++c) CHECK(moved(r, c) == img(r, c + 1));
        CHECK(moved(r, 6) == img(r, 6));
    }

    const Image2D ramp = ramp_x(4, 8, 0.1);
    VectorField2D half(4, 8);
    for (float& v : half.ux().data()) v = 0.5f;
    const Image2D out = warp(ramp, half);
    for (int c = 0; c < 7; ++c) CHECK(out(2, c) == doctest::Approx(0.1 * (c + 0.5)).epsilon(1e-6));

    // linear in the image
    const Image2D b = random_image(rng, 6, 7);
    VectorField2D u(6, 7);
    for (float& v : u.ux().data()) v = static_cast<float>(rng.uniform(-2, 2));
    for (float& v : u.uy().data()) v = static_cast<float>(rng.uniform(-2, 2));
    Image2D mix(6, 7);
    for (std::size_t i = 0; i < mix.size(); ++i) mix.data()[i] = 2.0f * img.data()[i] - 0.5f * b.data()[i];
    const Image2D wm = warp(mix, u), wa = warp(img, u), wb = warp(b, u);
    for (std::size_t i = 0; i < mix.size(); ++i) {
        CHECK(wm.data()[i] == doctest::Approx(2.0 * wa.data()[i] - 0.5 * wb.data()[i]).epsilon(1e-6));
    }

    CHECK_THROWS_AS(warp(img, VectorField2D(5, 7)), DimensionError);
}

TEST_CASE("spatial gradient") {
    const VectorField2D flat = spatial_gradient(Image2D(4, 5, 0.3f));
    for (float v : flat.ux().data()) CHECK(v == 0.0f);
    for (float v : flat.uy().data()) CHECK(v == 0.0f);

    const VectorField2D g = spatial_gradient(ramp_x(4, 5, 1.0));
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) CHECK(g.ux()(r, c) == 1.0f);
        CHECK(g.ux()(r, 4) == 0.0f);
        for (int c = 0; c < 5; ++c) CHECK(g.uy()(r, c) == 0.0f);
    }

    Rng rng(3);
    const Image2D img = random_image(rng, 3, 3);
    const VectorField2D d = spatial_gradient(img);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            CHECK(d.ux()(r, c) == (c < 2 ? img(r, c + 1) - img(r, c) : 0.0f));
            CHECK(d.uy()(r, c) == (r < 2 ? img(r + 1, c) - img(r, c) : 0.0f));
        }
    }
    CHECK_THROWS_AS(spatial_gradient(Image2D(1, 5)), DimensionError);
}

TEST_CASE("PLSG round trip and errors") {
    Rng rng(4);
    VectorField2D f(64, 64);
    for (float& v : f.ux().data()) v = static_cast<float>(rng.normal());
    for (float& v : f.uy().data()) v = static_cast<float>(rng.normal());
    const auto path = temp_path("field.plsg");
    write_field(path, f);
    CHECK(std::filesystem::file_size(path) == 20 + 2 * 64 * 64 * 4);
    CHECK(read_field(path) == f);

    auto bytes = encode_grid(to_grid(f));
    auto bad = bytes;
    bad[0] = 'X';
    bad[1] = 'X';
    bad[2] = 'X';
    bad[3] = 'X';
    try {
        decode_grid(bad);
        FAIL("expected magic error");
    } catch (const GridFormatError& e) {
        CHECK(e.kind() == GridFormatError::Kind::BadMagic);
    }
    bad = bytes;
    bad[4] = 2;
    try {
        decode_grid(bad);
        FAIL("expected version error");
    } catch (const GridFormatError& e) {
        CHECK(e.kind() == GridFormatError::Kind::BadVersion);
    }
    bad = bytes;
    bad.resize(bad.size() - 3);
    try {
        decode_grid(bad);
        FAIL("expected truncation error");
    } catch (const GridFormatError& e) {
        CHECK(e.kind() == GridFormatError::Kind::Truncated);
    }
}

TEST_CASE("PGM round trip quantises to 8 bits") {
    Image2D img(3, 4);
    for (int i = 0; i < 12; ++i) img.data()[i] = static_cast<float>(i) / 11.0f;
    const Image2D back = decode_pgm(encode_pgm(img));
    for (int i = 0; i < 12; ++i) CHECK(std::abs(back.data()[i] - img.data()[i]) <= 0.5f / 255.0f + 1e-6f);
    CHECK(decode_pgm(encode_pgm(back)) == back);
}
