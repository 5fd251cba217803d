#include "tracediff/pipeline/run.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>

#include "tracediff/grid_io.hpp"
#include "tracediff/pipeline/training.hpp"
#include "tracediff/pipeline/translate.hpp"

namespace tracediff {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace

Split split_cases(const std::vector<SyntheticCase>& cases, double holdout_fraction) {
    const int n = static_cast<int>(cases.size());
    const int train = holdout_fraction > 0.0 && n > 1 ? std::min(train_count(n, holdout_fraction), n - 1) : n;
    Split s;
    s.train.assign(cases.begin(), cases.begin() + train);
    s.test.assign(cases.begin() + train, cases.end());
    return s;
}

std::vector<TraceBundle> translate_cases(const std::vector<SyntheticCase>& cases, const Checkpoint& diffusion,
                                         const Checkpoint& regnet, const PipelineConfig& cfg,
                                         const std::filesystem::path& bundle_root) {
    const Translator models{cfg, diffusion, regnet};
    std::filesystem::create_directories(bundle_root);
    std::vector<TraceBundle> out;
    for (const SyntheticCase& c : cases) {
        TraceBundle b = translate(c.id, c.image, models, case_seed(cfg.seed, c.id));
        write_bundle(bundle_root / c.id, b);
        out.push_back(read_bundle(bundle_root / c.id));
    }
    return out;
}

std::vector<TraceBundle> read_bundles(const std::filesystem::path& bundle_root) {
    std::vector<std::filesystem::path> dirs;
    for (const auto& entry : std::filesystem::directory_iterator(bundle_root)) {
        if (entry.is_directory() && std::filesystem::exists(entry.path() / "meta.txt")) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    std::vector<TraceBundle> out;
    for (const auto& d : dirs) out.push_back(read_bundle(d));
    return out;
}

void write_losses(const std::filesystem::path& path, const std::vector<double>& losses) {
    std::string text;
    char buf[64];
    for (std::size_t i = 0; i < losses.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu %.17g\n", i, losses[i]);
        text += buf;
    }
    write_text(path, text);
}

RunArtifacts run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out_dir, std::ostream* log) {
    cfg.validate();
    auto say = [&](const std::string& s) {
        if (log) *log << s << std::endl;
    };
    std::filesystem::create_directories(out_dir);
    write_text(out_dir / "config.txt", format_config(cfg));

    RunArtifacts r;
    Stopwatch clock;
    r.data = generate_dataset(cfg.n_per_domain, cfg.seed, DatasetSpec::for_size(cfg.image_size));
    write_dataset(out_dir / "dataset", r.data);
    const Split a = split_cases(r.data.a, cfg.holdout_fraction);
    const Split b = split_cases(r.data.b, cfg.holdout_fraction);
    say("dataset: " + std::to_string(r.data.a.size()) + " cases per domain, " + std::to_string(a.test.size()) +
        " held out");

    TrainResult diff = train_diffusion(images_of(b.train), cfg);
    r.diffusion = diff.checkpoint;
    r.diffusion_losses = diff.losses;
    write_checkpoint(out_dir / "diffusion.ckpt", r.diffusion);
    write_losses(out_dir / "diffusion_loss.txt", r.diffusion_losses);
    say("diffusion trained (" + std::to_string(clock.seconds()) + " s)");

    TrainResult reg = train_deformation(make_pairs(images_of(a.train), images_of(b.train), cfg), r.diffusion, cfg);
    r.regnet = reg.checkpoint;
    r.deform_losses = reg.losses;
    write_checkpoint(out_dir / "regnet.ckpt", r.regnet);
    write_losses(out_dir / "deform_loss.txt", r.deform_losses);
    say("registration trained (" + std::to_string(clock.seconds()) + " s)");

    r.segmenter = fit_segmenter(b.train, cfg.segmenter, derive_seed(cfg.seed, 5));
    r.bundles = translate_cases(a.test, r.diffusion, r.regnet, cfg, out_dir / "bundles");
    say("translated " + std::to_string(r.bundles.size()) + " cases (" + std::to_string(clock.seconds()) + " s)");

    std::map<std::string, Image2D> masks;
    for (const SyntheticCase& c : a.test) masks[c.id] = c.mask;
    r.report = evaluate_traceability(r.bundles, r.segmenter, masks, images_of(b.test), cfg.parzen.bins);
    write_report(out_dir / "report.txt", r.report);
    say("evaluation written (" + std::to_string(clock.seconds()) + " s)");
    return r;
}

}  // namespace tracediff
