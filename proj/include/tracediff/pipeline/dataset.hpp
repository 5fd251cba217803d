#pragma once

// Synthetic two-domain ellipse benchmark.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tracediff/grid.hpp"

namespace tracediff {

enum class Domain { A, B };

struct EllipseParams {
    double cx = 0.0;
    double cy = 0.0;
    double ra = 0.0;  // semi-axis along the rotated x direction
    double rb = 0.0;
    double angle = 0.0;
    double fg_mean = 0.0;
    double fg_sd = 0.0;
    double bg_mean = 0.0;
    double bg_sd = 0.0;
};

struct SyntheticCase {
    std::string id;
    Domain domain = Domain::A;
    Image2D image;
    Image2D mask;  // 0 or 1
    EllipseParams params;
    std::uint64_t seed = 0;
};

struct DatasetSpec {
    int size = 64;
    double radius_min = 8.0;
    double radius_max = 14.0;
    double b_radius_scale = 1.4;
    double centre_jitter = 8.0;
    double texture_amplitude = 0.03;
    void validate() const;
    // Geometry scaled from the 64 px reference to another image size.
    static DatasetSpec for_size(int size);
};

struct Dataset {
    std::vector<SyntheticCase> a;
    std::vector<SyntheticCase> b;
};

SyntheticCase generate_case(Domain domain, int index, std::uint64_t seed, const DatasetSpec& spec = {});
Dataset generate_dataset(int n_per_domain, std::uint64_t seed, const DatasetSpec& spec = {});

// Pixel centres inside the ellipse.
Image2D rasterize_ellipse(int size, const EllipseParams& e);

// First floor(n * (1 - holdout)) cases train, the rest are held out.
int train_count(int n, double holdout_fraction);

void write_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& dir);

std::vector<Image2D> images_of(const std::vector<SyntheticCase>& cases);

}  // namespace tracediff
