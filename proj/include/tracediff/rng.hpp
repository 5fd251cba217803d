#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "tracediff/grid.hpp"

namespace tracediff {

// Seeded random source. Distributions are constructed per call so the only
// persistent state is the engine, which makes checkpointed state complete.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
    double normal(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }

    Image2D normal_image(int height, int width);

    std::string state() const;
    void restore(const std::string& state);

private:
    std::mt19937_64 engine_;
};

// Independent stream seed for (base, stream) via splitmix64 mixing.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace tracediff
