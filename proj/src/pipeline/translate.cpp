#include "tracediff/pipeline/translate.hpp"

#include "tracediff/grid_io.hpp"
#include "tracediff/pipeline/training.hpp"
#include "tracediff/structure.hpp"

namespace tracediff {

namespace {

template <class F>
auto stage(const char* name, F&& f) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

}  // namespace

std::uint64_t case_seed(std::uint64_t run_seed, const std::string& case_id) {
    const std::uint64_t h = fnv1a64({reinterpret_cast<const std::uint8_t*>(case_id.data()), case_id.size()});
    return derive_seed(run_seed ^ 0x7472616e736c6174ull, h);
}

TraceBundle translate(const std::string& case_id, const Image2D& x, const Translator& models,
                      std::uint64_t seed) {
    const PipelineConfig& cfg = models.cfg;
    stage("checkpoints", [&] {
        if (models.diffusion.kind != "denoiser") throw std::invalid_argument("diffusion checkpoint is not a denoiser");
        if (models.regnet.kind != "regnet") throw std::invalid_argument("registration checkpoint is not a regnet");
        return 0;
    });

    TraceBundle b;
    b.case_id = case_id;
    b.source = x;
    b.structure_source = stage("structure", [&] {
        const ContourMap cm = cluster_to_contours(x, cfg.n_clusters, cfg.seed);
        return transfer_levels(cm, levels_from_meta(models.diffusion)).render();
    });

    const RegnetOutput reg = stage("registration", [&] { return regnet_forward(models.regnet.net, models.regnet.params, x); });
    stage("integration", [&] {
        const IntegrationConfig ic{cfg.integration_steps};
        b.forward_field = integrate(reg.v, ic);
        b.inverse_field = inverse(reg.v, ic);
        return 0;
    });
    b.structure_deformed = warp(b.structure_source, b.forward_field);

    b.translated = stage("sampling", [&] {
        Rng rng(seed);
        const SamplerConfig sc{cfg.n_samples, cfg.reverse_noise};
        return denoise_loop(x, b.structure_deformed, make_noise_model(models.diffusion.net, models.diffusion.params),
                            cfg.inference_schedule(), rng, sc);
    });

    for (const auto& [k, v] : cfg.to_map()) b.meta["config." + k] = v;
    b.meta["sampler_seed"] = std::to_string(seed);
    return b;
}

}  // namespace tracediff
