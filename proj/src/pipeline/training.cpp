#include "tracediff/pipeline/training.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "tracediff/structure.hpp"

namespace tracediff {

namespace {

std::string join_levels(const std::vector<double>& levels) {
    std::string out;
    for (double v : levels) {
        char buf[64];
        auto r = std::to_chars(buf, buf + sizeof buf, v);
        if (!out.empty()) out += ',';
        out.append(buf, r.ptr);
    }
    return out;
}

void echo_config(Checkpoint& ckpt, const PipelineConfig& cfg) {
    for (const auto& [k, v] : cfg.to_map()) ckpt.meta["config." + k] = v;
}

void add_scaled(ParamMap& acc, const ParamMap& g, double s) {
    for (const auto& [name, v] : g) {
        std::vector<double>& a = acc[name];
        a.resize(v.size(), 0.0);
        for (std::size_t i = 0; i < v.size(); ++i) a[i] += s * v[i];
    }
}

struct LoopState {
    Rng rng;
    int step = 0;
};

LoopState start_state(Checkpoint& ckpt, const TrainOptions& opts, std::uint64_t seed, const char* kind) {
    LoopState s{Rng(seed), 0};
    if (opts.resume) {
        if (opts.resume->kind != kind) {
            throw std::invalid_argument(std::string("cannot resume a ") + kind + " run from a " +
                                        opts.resume->kind + " checkpoint");
        }
        ckpt.params = opts.resume->params;
        ckpt.adam = opts.resume->adam;
        s.step = std::stoi(opts.resume->meta.at("step"));
        s.rng.restore(opts.resume->meta.at("rng"));
    }
    return s;
}

}  // namespace

std::vector<Image2D> structure_maps(const std::vector<Image2D>& images, int n_clusters, std::uint64_t seed) {
    std::vector<Image2D> out;
    out.reserve(images.size());
    for (const Image2D& img : images) out.push_back(cluster_to_contours(img, n_clusters, seed).render());
    return out;
}

std::vector<double> reference_levels(const std::vector<Image2D>& images, int n_clusters, std::uint64_t seed) {
    if (images.empty()) throw std::invalid_argument("reference_levels: no images");
    std::vector<double> acc(n_clusters, 0.0);
    for (const Image2D& img : images) {
        const std::vector<double> lv = role_levels(cluster_to_contours(img, n_clusters, seed));
        if (static_cast<int>(lv.size()) != n_clusters) {
            throw DegenerateInputError("reference_levels: an image yielded fewer clusters than requested");
        }
        for (int i = 0; i < n_clusters; ++i) acc[i] += lv[i];
    }
    for (double& v : acc) v /= static_cast<double>(images.size());
    return acc;
}

std::vector<double> levels_from_meta(const Checkpoint& diffusion) {
    auto it = diffusion.meta.find("structure.levels");
    if (it == diffusion.meta.end()) throw std::invalid_argument("diffusion checkpoint has no structure levels");
    std::vector<double> out;
    std::istringstream in(it->second);
    std::string item;
    while (std::getline(in, item, ',')) out.push_back(std::stod(item));
    return out;
}

TrainResult train_diffusion(const std::vector<Image2D>& targets, const PipelineConfig& cfg,
                            const TrainOptions& opts) {
    cfg.validate();
    if (targets.empty()) throw std::invalid_argument("train_diffusion: no target images");
    const std::vector<Image2D> maps = structure_maps(targets, cfg.n_clusters, cfg.seed);
    const NoiseSchedule sched = cfg.training_schedule();

    TrainResult result;
    Checkpoint& ckpt = result.checkpoint;
    ckpt.kind = "denoiser";
    ckpt.net = cfg.denoiser_net;
    ckpt.params = init_denoiser(cfg.denoiser_net, derive_seed(cfg.seed, 1));
    echo_config(ckpt, cfg);
    ckpt.meta["structure.levels"] = join_levels(reference_levels(targets, cfg.n_clusters, cfg.seed));
    LoopState st = start_state(ckpt, opts, derive_seed(cfg.seed, 2), "denoiser");

    const DifferentiableNoiseModel model = make_trainable_noise_model(cfg.denoiser_net, ckpt.params);
    const long warmup = cfg.effective_diffusion_warmup();
    const int n = static_cast<int>(targets.size());
    while (st.step < cfg.diffusion_steps && (opts.stop_after < 0 || st.step < opts.stop_after)) {
        ParamMap grads;
        double loss = 0.0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const int i = st.rng.uniform_int(0, n - 1);
            const NoiseLoss l = training_loss_in(targets[i], maps[i], model, sched, st.rng);
            loss += l.loss / cfg.batch_size;
            add_scaled(grads, l.grads, 1.0 / cfg.batch_size);
        }
        if (!std::isfinite(loss)) {
            throw TrainingDivergedError("diffusion training diverged at step " + std::to_string(st.step));
        }
        adam_step(ckpt.params, grads, ckpt.adam, warmup_lr(st.step + 1, cfg.diffusion_lr, warmup));
        result.losses.push_back(loss);
        if (opts.on_step) opts.on_step(st.step, loss);
        ++st.step;
    }
    ckpt.meta["step"] = std::to_string(st.step);
    ckpt.meta["rng"] = st.rng.state();
    return result;
}

PairSource make_pairs(const std::vector<Image2D>& sources, const std::vector<Image2D>& targets,
                      const PipelineConfig& cfg) {
    if (sources.empty() || targets.empty()) throw std::invalid_argument("make_pairs: empty image set");
    return {sources, targets, structure_maps(targets, cfg.n_clusters, cfg.seed)};
}

TrainResult train_deformation(const PairSource& pairs, const Checkpoint& diffusion,
                              const PipelineConfig& cfg, const TrainOptions& opts) {
    cfg.validate();
    if (diffusion.kind != "denoiser") throw std::invalid_argument("train_deformation needs a denoiser checkpoint");
    if (pairs.x.empty() || pairs.y.empty() || pairs.y.size() != pairs.y_structure.size()) {
        throw std::invalid_argument("train_deformation: inconsistent pair source");
    }
    const NoiseSchedule sched = cfg.training_schedule();
    if (sched.steps() != std::stoi(diffusion.meta.at("config.k_steps"))) {
        throw std::invalid_argument("train_deformation: schedule length differs from the diffusion checkpoint");
    }
    const NoiseModel denoiser = make_noise_model(diffusion.net, diffusion.params);

    TrainResult result;
    Checkpoint& ckpt = result.checkpoint;
    ckpt.kind = "regnet";
    ckpt.net = cfg.regnet_net;
    ckpt.params = init_regnet(cfg.regnet_net, derive_seed(cfg.seed, 3));
    echo_config(ckpt, cfg);
    ckpt.meta["structure.levels"] = diffusion.meta.at("structure.levels");
    LoopState st = start_state(ckpt, opts, derive_seed(cfg.seed, 4), "regnet");

    const int nx = static_cast<int>(pairs.x.size());
    const int ny = static_cast<int>(pairs.y.size());
    const int h = pairs.x.front().height();
    const int w = pairs.x.front().width();
    while (st.step < cfg.deform_steps && (opts.stop_after < 0 || st.step < opts.stop_after)) {
        ParamMap grads;
        double loss = 0.0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            int xi = 0;
            int yi = 0;
            if (cfg.pairing == Pairing::Random) {
                xi = st.rng.uniform_int(0, nx - 1);
                yi = st.rng.uniform_int(0, ny - 1);
            } else {
                xi = yi = (st.step * cfg.batch_size + b) % std::min(nx, ny);
            }
            const int k = st.rng.uniform_int(1, sched.steps());
            const Image2D eps = st.rng.normal_image(h, w);
            Image2D eps_hat(h, w);
            if (cfg.use_eps_hat) {
                const Image2D noisy = forward_marginal(pairs.y[yi], k, eps, sched);
                eps_hat = denoiser(pairs.y_structure[yi], noisy, sched.gamma[k]);
            }
            const DeformationLoss l = total_deformation_loss(pairs.x[xi], pairs.y[yi], eps_hat, cfg.regnet_net,
                                                             ckpt.params, cfg.lambda1, cfg.parzen,
                                                             cfg.integration_steps);
            loss += l.objective / cfg.batch_size;
            add_scaled(grads, l.grads, 1.0 / cfg.batch_size);
        }
        if (!std::isfinite(loss)) {
            throw TrainingDivergedError("deformation training diverged at step " + std::to_string(st.step));
        }
        adam_step(ckpt.params, grads, ckpt.adam, warmup_lr(st.step + 1, cfg.deform_lr, cfg.deform_warmup));
        result.losses.push_back(loss);
        if (opts.on_step) opts.on_step(st.step, loss);
        ++st.step;
    }
    ckpt.meta["step"] = std::to_string(st.step);
    ckpt.meta["rng"] = st.rng.state();
    return result;
}

}  // namespace tracediff
