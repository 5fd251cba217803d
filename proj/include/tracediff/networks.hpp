#pragma once

// Small encoder-decoder models on the autodiff tape: the conditional noise
// estimator and the dual-head registration net, plus Adam and the
// finite-difference gradient checker.

#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "tracediff/autodiff.hpp"
#include "tracediff/diffusion.hpp"
#include "tracediff/grid.hpp"
#include "tracediff/rng.hpp"
#include "tracediff/similarity.hpp"

namespace tracediff {

struct NetConfig {
    int base_channels = 16;
    int depth = 3;
    int gamma_embedding_dim = 8;
    int feature_channels = 8;
    double velocity_scale = 1.0;

    void validate() const;
    // Group count for group norm: the largest of {4, 2, 1} dividing base_channels
    // with at least two channels per group (a one-channel group cancels the conv bias).
    int groups() const;
    bool operator==(const NetConfig&) const = default;
};

using ParamMap = std::map<std::string, std::vector<double>>;

struct ModelParams {
    std::map<std::string, ad::Tensor> tensors;
    std::uint64_t init_seed = 0;

    std::size_t count() const;
    const ad::Tensor& at(const std::string& name) const;
    bool operator==(const ModelParams& other) const;
};

class NonFiniteGradientError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Parameters bound to a tape, either as trainable leaves or as constants.
class BoundParams {
public:
    BoundParams(ad::Tape& tape, const ModelParams& params, bool trainable);
    ad::Var operator[](const std::string& name) const;

private:
    std::map<std::string, ad::Var> vars_;
};

ModelParams init_denoiser(const NetConfig& cfg, std::uint64_t seed);
ModelParams init_regnet(const NetConfig& cfg, std::uint64_t seed);

// Adds uniform(-scale, scale) noise to every tensor; used to leave the
// zero-initialised heads before gradient checks.
void perturb(ModelParams& params, Rng& rng, double scale);

ad::Var denoiser_forward(ad::Tape& t, const NetConfig& cfg, const BoundParams& p, ad::Var condition,
                         ad::Var noisy, double gamma);
Image2D denoiser_forward(const NetConfig& cfg, const ModelParams& params, const Image2D& condition,
                         const Image2D& noisy, double gamma);

// The inference model holds a copy of params; the trainable one refers to
// params, which must outlive it.
NoiseModel make_noise_model(const NetConfig& cfg, const ModelParams& params);
DifferentiableNoiseModel make_trainable_noise_model(const NetConfig& cfg, const ModelParams& params);

struct RegnetVars {
    ad::Var v;
    ad::Var v_inv;
    ad::Var feat_pred;
};

// Features of the target side computed from (y, eps_hat).
ad::Var aux_encoder(ad::Tape& t, const NetConfig& cfg, const BoundParams& p, ad::Var y, ad::Var eps_hat);

// aux may be invalid, in which case feat_pred substitutes for it (inference).
RegnetVars regnet_forward(ad::Tape& t, const NetConfig& cfg, const BoundParams& p, ad::Var x, ad::Var aux);

struct RegnetOutput {
    VectorField2D v;
    VectorField2D v_inv;
    ad::Tensor feat_pred;
};

// Inference path: self-substituted features.
RegnetOutput regnet_forward(const NetConfig& cfg, const ModelParams& params, const Image2D& x);

struct DeformationLoss {
    double data = 0.0;
    double smooth = 0.0;
    double align = 0.0;
    double total = 0.0;      // data + lambda1 * smooth + align
    double objective = 0.0;  // -data + lambda1 * smooth + align, the minimised quantity
    ParamMap grads;          // of objective
};

// One registration training sample: aux features from (y, eps_hat), both
// velocity heads, and the assembled loss with its parameter gradients.
// align_target, when given, replaces the aux features as the alignment target
// (the same features the stop-gradient sees, held fixed across evaluations).
DeformationLoss total_deformation_loss(const Image2D& x, const Image2D& y, const Image2D& eps_hat,
                                       const NetConfig& cfg, const ModelParams& params,
                                       double lambda1, const ParzenConfig& parzen = {},
                                       int integration_steps = 7, const ad::Tensor* align_target = nullptr);

ad::Tensor aux_features(const NetConfig& cfg, const ModelParams& params, const Image2D& y,
                        const Image2D& eps_hat);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    ParamMap m;
    ParamMap v;
    long step = 0;
    bool operator==(const AdamState&) const = default;
};

void adam_step(ModelParams& params, const ParamMap& grads, AdamState& state, double lr,
               const AdamConfig& cfg = {});

double warmup_lr(long step, double base_lr, long warmup_steps);

using LossClosure = std::function<std::pair<double, ParamMap>(const ModelParams&)>;

struct GradCheckEntry {
    std::string name;
    std::size_t size = 0;
    double rel_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double worst = 0.0;
    double tolerance = 0.0;
    bool passed() const { return worst < tolerance; }
};

// Central differences with h = h_rel * max(1, |theta|) per coordinate. Each
// tensor's error is ||g - g_fd||_inf / max(||g||_inf, ||g_fd||_inf), and 0 when
// both norms are below the difference roundoff 100 * eps * max(1, |L|) / h_rel.
GradCheckReport gradient_check(const LossClosure& f, const ModelParams& params, double tolerance,
                               double h_rel = 1e-6);

}  // namespace tracediff
