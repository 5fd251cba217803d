#include "tracediff/gradsuite.hpp"

#include <stdexcept>

#include "tracediff/deformation.hpp"
#include "tracediff/diffusion.hpp"
#include "tracediff/similarity.hpp"

namespace tracediff {

namespace {

ad::Tensor random_tensor(Rng& rng, ad::Shape s, double lo, double hi) {
    ad::Tensor t(s);
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

std::pair<double, ParamMap> run_tape(const ModelParams& p,
                                     const std::function<ad::Var(ad::Tape&, const BoundParams&)>& build) {
    ad::Tape t;
    const BoundParams bound(t, p, true);
    const ad::Var loss = build(t, bound);
    t.backward(loss);
    return {t.value(loss)[0], t.parameter_grads()};
}

NetConfig tiny_net() {
    NetConfig cfg;
    cfg.base_channels = 2;
    cfg.depth = 1;
    cfg.gamma_embedding_dim = 2;
    cfg.feature_channels = 1;
    return cfg;
}

}  // namespace

GradSuiteEntry check_loss_gradient(const std::string& loss, std::uint64_t seed, int size, double tolerance,
                                   double h_rel) {
    if (size < 2 || size > 8) throw std::invalid_argument("gradient suite instances must be 2..8 pixels wide");
    Rng rng(seed);
    const ad::Shape img{1, size, size};
    const ad::Shape vel{2, size, size};
    ModelParams params;
    params.init_seed = seed;
    LossClosure f;

    if (loss == "smoothness") {
        params.tensors.emplace("v", random_tensor(rng, vel, -2.0, 2.0));
        f = [](const ModelParams& p) {
            return run_tape(p, [](ad::Tape& t, const BoundParams& b) { return ad::smoothness(t, b["v"]); });
        };
    } else if (loss == "mi") {
        const ad::Tensor fixed = random_tensor(rng, img, 0.1, 0.9);
        params.tensors.emplace("moving", random_tensor(rng, img, 0.1, 0.9));
        f = [fixed](const ModelParams& p) {
            return run_tape(p, [&](ad::Tape& t, const BoundParams& b) {
                return ad::mutual_information(t, t.constant(fixed), b["moving"]);
            });
        };
    } else if (loss == "data") {
        const ad::Tensor x = random_tensor(rng, img, 0.1, 0.9);
        const ad::Tensor y = random_tensor(rng, img, 0.1, 0.9);
        params.tensors.emplace("v", random_tensor(rng, vel, -1.5, 1.5));
        params.tensors.emplace("v_inv", random_tensor(rng, vel, -1.5, 1.5));
        f = [x, y](const ModelParams& p) {
            return run_tape(p, [&](ad::Tape& t, const BoundParams& b) {
                return ad::data_loss(t, t.constant(x), t.constant(y), b["v"], b["v_inv"]);
            });
        };
    } else if (loss == "alignment") {
        const ad::Tensor target = random_tensor(rng, {2, size, size}, -1.0, 1.0);
        params.tensors.emplace("feat", random_tensor(rng, {2, size, size}, -1.0, 1.0));
        f = [target](const ModelParams& p) {
            return run_tape(p, [&](ad::Tape& t, const BoundParams& b) {
                return ad::feature_alignment(t, b["feat"], t.constant(target));
            });
        };
    } else if (loss == "noise") {
        const NetConfig cfg = tiny_net();
        params = init_denoiser(cfg, seed);
        perturb(params, rng, 0.3);
        Image2D y0(size, size), ys(size, size);
        for (float& v : y0.data()) v = static_cast<float>(rng.uniform(0.1, 0.9));
        for (float& v : ys.data()) v = static_cast<float>(rng.uniform(0.1, 0.9));
        const NoiseSchedule sched = make_linear_schedule(20, 1e-4, 0.1);
        const std::uint64_t draw_seed = derive_seed(seed, 1);
        f = [cfg, y0, ys, sched, draw_seed](const ModelParams& p) {
            Rng draws(draw_seed);
            NoiseLoss r = training_loss_in(y0, ys, make_trainable_noise_model(cfg, p), sched, draws);
            return std::pair<double, ParamMap>{r.loss, std::move(r.grads)};
        };
    } else if (loss == "total") {
        const NetConfig cfg = tiny_net();
        params = init_regnet(cfg, seed);
        perturb(params, rng, 0.3);
        Image2D x(size, size), y(size, size), eps(size, size);
        for (float& v : x.data()) v = static_cast<float>(rng.uniform(0.1, 0.9));
        for (float& v : y.data()) v = static_cast<float>(rng.uniform(0.1, 0.9));
        for (float& v : eps.data()) v = static_cast<float>(rng.normal());
        // Stop-gradient semantics: the alignment target is fixed at the base parameters.
        const ad::Tensor target = aux_features(cfg, params, y, eps);
        f = [cfg, x, y, eps, target](const ModelParams& p) {
            DeformationLoss r = total_deformation_loss(x, y, eps, cfg, p, 1.0, {}, 7, &target);
            return std::pair<double, ParamMap>{r.objective, std::move(r.grads)};
        };
    } else {
        throw std::invalid_argument("unknown loss for gradient check: " + loss);
    }

    GradSuiteEntry e;
    e.loss = loss;
    e.seed = seed;
    e.parameters = params.count();
    e.report = gradient_check(f, params, tolerance, h_rel);
    return e;
}

std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t first_seed, int n_seeds, int size, double tolerance) {
    std::vector<GradSuiteEntry> out;
    for (const char* loss : kGradSuiteLosses) {
        for (int s = 0; s < n_seeds; ++s) {
            out.push_back(check_loss_gradient(loss, first_seed + static_cast<std::uint64_t>(s), size, tolerance));
        }
    }
    return out;
}

}  // namespace tracediff
