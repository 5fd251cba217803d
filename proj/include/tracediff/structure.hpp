#pragma once

// Structure maps: intensity clustering of an image into a few flat regions.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "tracediff/grid.hpp"

namespace tracediff {

class DegenerateInputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct ContourMap {
    int height = 0;
    int width = 0;
    std::vector<int> labels;     // row-major, in [0, n_clusters)
    std::vector<double> levels;  // ascending

    int clusters() const { return static_cast<int>(levels.size()); }
    int label(int row, int col) const { return labels[static_cast<std::size_t>(row) * width + col]; }
    Image2D render() const;
    bool operator==(const ContourMap&) const = default;
};

struct KMeansConfig {
    int max_iterations = 100;
    double tolerance = 1e-6;
};

// 1-D k-means over pixel intensities with k-means++ seeding. Labels are
// ordered so levels (cluster means) ascend.
ContourMap cluster_to_contours(const Image2D& img, int n_clusters = 2, std::uint64_t seed = 0,
                               const KMeansConfig& cfg = {});

// Cluster ids ordered by role: the cluster covering the largest share of the
// image border first (background), ties broken by size then level.
std::vector<int> role_order(const ContourMap& map);

// Levels listed in role order.
std::vector<double> role_levels(const ContourMap& map);

// Same regions, re-rendered at the given per-role levels, relabelled so the
// resulting levels ascend.
ContourMap transfer_levels(const ContourMap& map, const std::vector<double>& levels_by_role);

}  // namespace tracediff
