#pragma once

// Run configuration: a line-oriented "key = value" file. Every key is echoed
// into checkpoints and bundle metadata.

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include "tracediff/diffusion.hpp"
#include "tracediff/networks.hpp"
#include "tracediff/similarity.hpp"

namespace tracediff {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class Pairing { Random, Fixed };
enum class SegmenterKind { Threshold, Net };

struct PipelineConfig {
    std::uint64_t seed = 7;

    // data
    int image_size = 64;
    int n_per_domain = 200;
    double holdout_fraction = 0.2;

    // diffusion schedule and sampler
    int k_steps = 200;
    double beta_start = 1e-6;
    double beta_end = 1e-2;
    int infer_stride = 1;
    int n_samples = 50;
    ReverseNoise reverse_noise = ReverseNoise::Beta;

    // networks
    NetConfig denoiser_net;
    NetConfig regnet_net;

    // diffusion training
    int diffusion_steps = 2000;
    int batch_size = 3;
    double diffusion_lr = 1e-4;
    long diffusion_warmup = 10000;

    // deformation training
    int deform_steps = 2000;
    double deform_lr = 2e-4;
    long deform_warmup = 200;
    double lambda1 = 1.0;
    Pairing pairing = Pairing::Random;
    bool use_eps_hat = true;
    int integration_steps = 7;
    ParzenConfig parzen;

    // structure maps and evaluation
    int n_clusters = 2;
    SegmenterKind segmenter = SegmenterKind::Threshold;

    // Warmup actually applied to a diffusion run: capped at a tenth of its length.
    long effective_diffusion_warmup() const;
    NoiseSchedule training_schedule() const;
    NoiseSchedule inference_schedule() const;

    void validate() const;
    std::map<std::string, std::string> to_map() const;
    void set(const std::string& key, const std::string& value);
};

PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);
std::string format_config(const PipelineConfig& cfg);

}  // namespace tracediff
