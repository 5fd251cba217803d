#pragma once

// Inference: source image -> translated image plus forward/inverse fields.

#include <cstdint>
#include <stdexcept>
#include <string>

#include "tracediff/checkpoint.hpp"
#include "tracediff/pipeline/bundle.hpp"
#include "tracediff/pipeline/config.hpp"

namespace tracediff {

class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& what)
        : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

struct Translator {
    PipelineConfig cfg;
    Checkpoint diffusion;
    Checkpoint regnet;
};

// Order: cluster x into x_s (rendered at the target reference levels), run the
// registration net on x alone, integrate v into phi and phi^-1 = C(-v), warp
// x_s by phi, then run the conditional sampler from x.
TraceBundle translate(const std::string& case_id, const Image2D& x, const Translator& models,
                      std::uint64_t seed);

// Per-case sampler seed.
std::uint64_t case_seed(std::uint64_t run_seed, const std::string& case_id);

}  // namespace tracediff
