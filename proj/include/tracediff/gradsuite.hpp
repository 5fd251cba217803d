#pragma once

// Finite-difference checks of every loss on small instances. Each check
// treats the loss inputs (or a tiny network) as the parameter set.

#include <cstdint>
#include <string>
#include <vector>

#include "tracediff/networks.hpp"

namespace tracediff {

struct GradSuiteEntry {
    std::string loss;  // smoothness, mi, data, alignment, noise, total
    std::uint64_t seed = 0;
    std::size_t parameters = 0;
    GradCheckReport report;
};

inline constexpr const char* kGradSuiteLosses[] = {"smoothness", "mi", "data", "alignment", "noise", "total"};

// size <= 8; instances are size x size.
GradSuiteEntry check_loss_gradient(const std::string& loss, std::uint64_t seed, int size = 8,
                                   double tolerance = 1e-4, double h_rel = 1e-6);

std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t first_seed, int n_seeds, int size = 8,
                                               double tolerance = 1e-4);

}  // namespace tracediff
