#include "tracediff/structure.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tracediff/rng.hpp"

namespace tracediff {

namespace {

int nearest(double v, const std::vector<double>& centres) {
    int best = 0;
    double best_d = std::abs(v - centres[0]);
    for (int c = 1; c < static_cast<int>(centres.size()); ++c) {
        const double d = std::abs(v - centres[c]);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

std::vector<double> seed_centres(const std::vector<double>& x, int k, Rng& rng) {
    const int n = static_cast<int>(x.size());
    std::vector<double> centres{x[rng.uniform_int(0, n - 1)]};
    std::vector<double> d2(n);
    while (static_cast<int>(centres.size()) < k) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            const double d = x[i] - centres[nearest(x[i], centres)];
            d2[i] = d * d;
            total += d2[i];
        }
        if (total <= 0.0) break;
        const double target = rng.uniform() * total;
        double acc = 0.0;
        int pick = n - 1;
        for (int i = 0; i < n; ++i) {
            acc += d2[i];
            if (acc > target) {
                pick = i;
                break;
            }
        }
        centres.push_back(x[pick]);
    }
    return centres;
}

}  // namespace

Image2D ContourMap::render() const {
    Image2D out(height, width);
    for (std::size_t i = 0; i < labels.size(); ++i) out.data()[i] = static_cast<float>(levels[labels[i]]);
    return out;
}

ContourMap cluster_to_contours(const Image2D& img, int n_clusters, std::uint64_t seed,
                               const KMeansConfig& cfg) {
    if (n_clusters < 1 || n_clusters > 4) throw std::invalid_argument("n_clusters must be in [1, 4]");
    if (img.empty()) throw DimensionError("cluster_to_contours: empty image");
    const std::vector<double> x(img.data().begin(), img.data().end());
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size());
    if (n_clusters >= 2 && var <= 1e-8) {
        throw DegenerateInputError("cluster_to_contours: intensity variance " + std::to_string(var) +
                                   " too small for " + std::to_string(n_clusters) + " clusters");
    }

    Rng rng(seed);
    std::vector<double> centres = seed_centres(x, n_clusters, rng);
    const int k = static_cast<int>(centres.size());
    std::vector<int> labels(x.size());
    for (int it = 0; it < cfg.max_iterations; ++it) {
        std::vector<double> sum(k, 0.0);
        std::vector<std::size_t> count(k, 0);
        for (std::size_t i = 0; i < x.size(); ++i) {
            labels[i] = nearest(x[i], centres);
            sum[labels[i]] += x[i];
            ++count[labels[i]];
        }
        double shift = 0.0;
        for (int c = 0; c < k; ++c) {
            if (count[c] == 0) continue;
            const double updated = sum[c] / static_cast<double>(count[c]);
            shift = std::max(shift, std::abs(updated - centres[c]));
            centres[c] = updated;
        }
        if (shift < cfg.tolerance) break;
    }
    for (std::size_t i = 0; i < x.size(); ++i) labels[i] = nearest(x[i], centres);

    // Final levels are exact cluster means; empty clusters are dropped.
    std::vector<double> sum(k, 0.0);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        sum[labels[i]] += x[i];
        ++count[labels[i]];
    }
    std::vector<int> used;
    for (int c = 0; c < k; ++c) {
        if (count[c] > 0) used.push_back(c);
    }
    std::sort(used.begin(), used.end(), [&](int a, int b) {
        return sum[a] / static_cast<double>(count[a]) < sum[b] / static_cast<double>(count[b]);
    });
    std::vector<int> remap(k, 0);
    ContourMap map;
    map.height = img.height();
    map.width = img.width();
    for (int r = 0; r < static_cast<int>(used.size()); ++r) {
        remap[used[r]] = r;
        map.levels.push_back(sum[used[r]] / static_cast<double>(count[used[r]]));
    }
    map.labels.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) map.labels[i] = remap[labels[i]];
    return map;
}

std::vector<int> role_order(const ContourMap& map) {
    const int k = map.clusters();
    std::vector<std::size_t> border(k, 0);
    std::vector<std::size_t> size(k, 0);
    for (int r = 0; r < map.height; ++r) {
        for (int c = 0; c < map.width; ++c) {
            const int l = map.label(r, c);
            ++size[l];
            if (r == 0 || c == 0 || r == map.height - 1 || c == map.width - 1) ++border[l];
        }
    }
    std::vector<int> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (border[a] != border[b]) return border[a] > border[b];
        return size[a] > size[b];
    });
    return order;
}

std::vector<double> role_levels(const ContourMap& map) {
    std::vector<double> out;
    for (int c : role_order(map)) out.push_back(map.levels[c]);
    return out;
}

ContourMap transfer_levels(const ContourMap& map, const std::vector<double>& levels_by_role) {
    if (levels_by_role.size() != map.levels.size()) {
        throw std::invalid_argument("transfer_levels: " + std::to_string(levels_by_role.size()) +
                                    " levels for " + std::to_string(map.levels.size()) + " clusters");
    }
    const std::vector<int> order = role_order(map);
    const int k = map.clusters();
    std::vector<double> level_of(k);
    for (int role = 0; role < k; ++role) level_of[order[role]] = levels_by_role[role];
    std::vector<int> ids(k);
    std::iota(ids.begin(), ids.end(), 0);
    std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) { return level_of[a] < level_of[b]; });
    std::vector<int> remap(k);
    ContourMap out;
    out.height = map.height;
    out.width = map.width;
    for (int r = 0; r < k; ++r) {
        remap[ids[r]] = r;
        out.levels.push_back(level_of[ids[r]]);
    }
    out.labels.resize(map.labels.size());
    for (std::size_t i = 0; i < map.labels.size(); ++i) out.labels[i] = remap[map.labels[i]];
    return out;
}

}  // namespace tracediff
