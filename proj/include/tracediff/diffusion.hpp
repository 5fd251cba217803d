#pragma once

// Diffusion timetable, forward noising, posterior, and the conditional reverse
// sampler that turns a noised source image into a target-domain image.

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tracediff/autodiff.hpp"
#include "tracediff/grid.hpp"
#include "tracediff/rng.hpp"

namespace tracediff {

// alpha[k] and gamma[k] for k = 0..K; alpha[0] = gamma[0] = 1.
struct NoiseSchedule {
    std::vector<double> alpha;
    std::vector<double> gamma;

    int steps() const { return static_cast<int>(alpha.size()) - 1; }
    double beta(int k) const { return 1.0 - alpha.at(k); }

    // Every stride-th level of this schedule, re-indexed 1..K/stride with
    // alpha'_j = gamma'_j / gamma'_{j-1}. stride must divide K.
    NoiseSchedule strided(int stride) const;
};

// beta_k linear from beta_start (k=1) to beta_end (k=K), alpha_k = 1 - beta_k.
NoiseSchedule make_linear_schedule(int steps, double beta_start, double beta_end);

struct PosteriorParams {
    Image2D mu;
    double sigma2 = 0.0;
};

enum class ReverseNoise {
    Beta,       // sqrt(1 - alpha_k)
    Posterior,  // sqrt of the forward-posterior variance
};

// sqrt(gamma_k) y0 + sqrt(1 - gamma_k) eps.
Image2D forward_marginal(const Image2D& y0, int k, const Image2D& eps, const NoiseSchedule& sched);

// x_K drawn from q(x_K | x_0).
Image2D noise_source(const Image2D& x0, const NoiseSchedule& sched, Rng& rng);

PosteriorParams posterior_params(const Image2D& y0, const Image2D& yk, int k,
                                 const NoiseSchedule& sched);

// (1/sqrt(alpha_k)) (y_k - (1 - alpha_k)/sqrt(1 - gamma_k) eps_hat) + sigma_k z.
Image2D reverse_step(const Image2D& yk, const Image2D& eps_hat, int k, const NoiseSchedule& sched,
                     const Image2D& z, ReverseNoise noise = ReverseNoise::Beta);

// (y_k - sqrt(1 - gamma_k) eps_hat) / sqrt(gamma_k).
Image2D predict_clean(const Image2D& yk, const Image2D& eps_hat, int k, const NoiseSchedule& sched);

using NoiseModel =
    std::function<Image2D(const Image2D& condition, const Image2D& noisy, double gamma)>;

struct SamplerConfig {
    int n_samples = 50;
    ReverseNoise noise = ReverseNoise::Beta;
};

// Runs n_samples independent reverse chains from x_K ~ q(x_K | x0) and returns
// their pixel-wise mean. Chains use per-sample streams derived from one draw of
// rng, so the result is independent of thread count. model must be callable
// concurrently.
Image2D denoise_loop(const Image2D& x0, const Image2D& condition, const NoiseModel& model,
                     const NoiseSchedule& sched, Rng& rng, const SamplerConfig& cfg = {});

using DifferentiableNoiseModel =
    std::function<ad::Var(ad::Tape&, ad::Var condition, ad::Var noisy, double gamma)>;

struct NoiseLoss {
    double loss = 0.0;
    int k = 0;
    std::map<std::string, std::vector<double>> grads;
};

// Draws k ~ U{1..K} and eps ~ N(0, I), evaluates mean |eps - model(y_s, y_k, gamma_k)|
// and backpropagates into every parameter the model binds on the tape.
NoiseLoss training_loss_in(const Image2D& y0, const Image2D& ys, const DifferentiableNoiseModel& model,
                           const NoiseSchedule& sched, Rng& rng);

}  // namespace tracediff
