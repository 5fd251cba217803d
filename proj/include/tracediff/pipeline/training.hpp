#pragma once

// Training loops for the noise estimator and the registration net.

#include <functional>
#include <stdexcept>
#include <vector>

#include "tracediff/checkpoint.hpp"
#include "tracediff/pipeline/config.hpp"
#include "tracediff/pipeline/dataset.hpp"

namespace tracediff {

class TrainingDivergedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainOptions {
    const Checkpoint* resume = nullptr;  // continue from its stored step
    int stop_after = -1;                 // stop once this many steps are done (-1: run to the end)
    std::function<void(int step, double loss)> on_step;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<double> losses;  // one per step run in this call
};

// Structure maps at each image's own cluster levels.
std::vector<Image2D> structure_maps(const std::vector<Image2D>& images, int n_clusters, std::uint64_t seed);

// Mean per-role cluster levels over a set of images.
std::vector<double> reference_levels(const std::vector<Image2D>& images, int n_clusters, std::uint64_t seed);

std::vector<double> levels_from_meta(const Checkpoint& diffusion);

// Minibatches of (y, y_s) from the target-domain training images.
TrainResult train_diffusion(const std::vector<Image2D>& targets, const PipelineConfig& cfg,
                            const TrainOptions& opts = {});

struct PairSource {
    std::vector<Image2D> x;
    std::vector<Image2D> y;
    std::vector<Image2D> y_structure;
};

PairSource make_pairs(const std::vector<Image2D>& sources, const std::vector<Image2D>& targets,
                      const PipelineConfig& cfg);

// For each sampled pair: draws k and eps, computes eps_hat from the frozen
// denoiser (zeros when cfg.use_eps_hat is false, with identical random draws),
// and takes an Adam step on the registration objective.
TrainResult train_deformation(const PairSource& pairs, const Checkpoint& diffusion,
                              const PipelineConfig& cfg, const TrainOptions& opts = {});

}  // namespace tracediff
