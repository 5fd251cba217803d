// tracediff: command-line driver. Every stage works inside one run directory:
//
//   run/config.txt  dataset/  diffusion.ckpt  regnet.ckpt  bundles/<id>/  report.txt

#include <cstdio>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "tracediff/checkpoint.hpp"
#include "tracediff/gradsuite.hpp"
#include "tracediff/grid_io.hpp"
#include "tracediff/pipeline/run.hpp"
#include "tracediff/pipeline/service.hpp"
#include "tracediff/pipeline/training.hpp"
#include "tracediff/pipeline/translate.hpp"

namespace fs = std::filesystem;
using namespace tracediff;

namespace {

struct Common {
    std::string out = "run";
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::optional<int> k_steps;
    std::optional<int> n_samples;
    std::optional<double> lambda1;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--out", c.out, "Run directory")->capture_default_str();
    app->add_option("--config", c.config, "Config file (default: <out>/config.txt when present)");
    app->add_option("--set", c.sets, "Override a config key: key=value (repeatable)");
    app->add_option("--seed", c.seed, "Run seed");
    app->add_option("--k-steps", c.k_steps, "Diffusion steps K");
    app->add_option("--n-samples", c.n_samples, "Denoising samples averaged per case");
    app->add_option("--lambda1", c.lambda1, "Smoothness weight");
}

PipelineConfig resolve_config(const Common& c) {
    PipelineConfig cfg;
    if (!c.config.empty()) {
        cfg = load_config(c.config);
    } else if (fs::exists(fs::path(c.out) / "config.txt")) {
        cfg = load_config(fs::path(c.out) / "config.txt");
    }
    for (const std::string& kv : c.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + kv);
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (c.seed) cfg.seed = *c.seed;
    if (c.k_steps) cfg.k_steps = *c.k_steps;
    if (c.n_samples) cfg.n_samples = *c.n_samples;
    if (c.lambda1) cfg.lambda1 = *c.lambda1;
    cfg.validate();
    return cfg;
}

void save_config(const fs::path& out, const PipelineConfig& cfg) {
    fs::create_directories(out);
    const std::string text = format_config(cfg);
    write_file_bytes(out / "config.txt", std::vector<std::uint8_t>(text.begin(), text.end()));
}

Dataset load_dataset(const fs::path& out) {
    if (!fs::exists(out / "dataset")) throw std::runtime_error("no dataset in " + out.string() + " (run gen-data)");
    return read_dataset(out / "dataset");
}

std::function<void(int, double)> progress(const char* what, int total) {
    const int every = std::max(1, total / 20);
    return [what, total, every](int step, double loss) {
        if ((step + 1) % every == 0 || step + 1 == total) {
            std::fprintf(stderr, "%s step %d/%d loss %.6f\n", what, step + 1, total, loss);
        }
    };
}

void gen_data(const Common& c) {
    const PipelineConfig cfg = resolve_config(c);
    const fs::path out(c.out);
    save_config(out, cfg);
    const Dataset data = generate_dataset(cfg.n_per_domain, cfg.seed, DatasetSpec::for_size(cfg.image_size));
    write_dataset(out / "dataset", data);
    std::cout << "wrote " << data.a.size() << " + " << data.b.size() << " cases to " << (out / "dataset") << "\n";
}

void train_diffusion_cmd(const Common& c) {
    const PipelineConfig cfg = resolve_config(c);
    const fs::path out(c.out);
    save_config(out, cfg);
    const Dataset data = load_dataset(out);
    TrainOptions opts;
    opts.on_step = progress("diffusion", cfg.diffusion_steps);
    const TrainResult r = train_diffusion(images_of(split_cases(data.b, cfg.holdout_fraction).train), cfg, opts);
    write_checkpoint(out / "diffusion.ckpt", r.checkpoint);
    write_losses(out / "diffusion_loss.txt", r.losses);
    std::cout << "wrote " << (out / "diffusion.ckpt") << "\n";
}

void train_deform_cmd(const Common& c, bool without_eps_hat) {
    PipelineConfig cfg = resolve_config(c);
    if (without_eps_hat) cfg.use_eps_hat = false;
    const fs::path out(c.out);
    save_config(out, cfg);
    const Dataset data = load_dataset(out);
    const Checkpoint diffusion = read_checkpoint(out / "diffusion.ckpt");
    const PairSource pairs = make_pairs(images_of(split_cases(data.a, cfg.holdout_fraction).train),
                                        images_of(split_cases(data.b, cfg.holdout_fraction).train), cfg);
    TrainOptions opts;
    opts.on_step = progress("deform", cfg.deform_steps);
    const TrainResult r = train_deformation(pairs, diffusion, cfg, opts);
    write_checkpoint(out / "regnet.ckpt", r.checkpoint);
    write_losses(out / "deform_loss.txt", r.losses);
    std::cout << "wrote " << (out / "regnet.ckpt") << "\n";
}

void translate_cmd(const Common& c, const std::string& image, const std::string& id) {
    const PipelineConfig cfg = resolve_config(c);
    const fs::path out(c.out);
    const Checkpoint diffusion = read_checkpoint(out / "diffusion.ckpt");
    const Checkpoint regnet = read_checkpoint(out / "regnet.ckpt");
    if (!image.empty()) {
        const std::string case_id = id.empty() ? fs::path(image).stem().string() : id;
        const Translator models{cfg, diffusion, regnet};
        const TraceBundle b = translate(case_id, read_pgm(image), models, case_seed(cfg.seed, case_id));
        write_bundle(out / "bundles" / case_id, b);
        std::cout << "wrote " << (out / "bundles" / case_id) << "\n";
        return;
    }
    const Dataset data = load_dataset(out);
    const auto bundles = translate_cases(split_cases(data.a, cfg.holdout_fraction).test, diffusion, regnet, cfg,
                                         out / "bundles");
    std::cout << "wrote " << bundles.size() << " bundles to " << (out / "bundles") << "\n";
}

void evaluate_cmd(const Common& c) {
    const PipelineConfig cfg = resolve_config(c);
    const fs::path out(c.out);
    const Dataset data = load_dataset(out);
    const auto bundles = read_bundles(out / "bundles");
    std::map<std::string, Image2D> masks;
    for (const SyntheticCase& s : data.a) masks[s.id] = s.mask;
    const SegModel seg =
        fit_segmenter(split_cases(data.b, cfg.holdout_fraction).train, cfg.segmenter, derive_seed(cfg.seed, 5));
    const EvaluationReport report = evaluate_traceability(
        bundles, seg, masks, images_of(split_cases(data.b, cfg.holdout_fraction).test), cfg.parzen.bins);
    write_report(out / "report.txt", report);
    std::cout << report.format();
}

std::pair<std::string, int> parse_bind(const std::string& bind) {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) throw std::invalid_argument("--bind expects host:port");
    return {bind.substr(0, colon), std::stoi(bind.substr(colon + 1))};
}

void serve_cmd(const Common& c, const std::string& bundles, const std::string& bind) {
    const fs::path root = bundles.empty() ? fs::path(c.out) / "bundles" : fs::path(bundles);
    TraceService service(root);
    const auto [host, port] = parse_bind(bind);
    std::cerr << "serving " << service.case_ids().size() << " cases from " << root << " on " << host << ":" << port
              << "\n";
    service.listen(host, port);
}

int gradcheck_cmd(std::uint64_t seed, int n_seeds, double tolerance) {
    bool ok = true;
    for (const GradSuiteEntry& e : run_gradient_suite(seed, n_seeds, 8, tolerance)) {
        std::printf("%-10s seed %llu params %zu worst %.3e %s\n", e.loss.c_str(),
                    static_cast<unsigned long long>(e.seed), e.parameters, e.report.worst,
                    e.report.passed() ? "ok" : "FAIL");
        ok = ok && e.report.passed();
    }
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Traceable diffusion translation: data, training, translation, evaluation, service"};
    app.require_subcommand(1);
    Common c;

    auto* gen = app.add_subcommand("gen-data", "Generate the synthetic two-domain dataset");
    add_common(gen, c);

    auto* td = app.add_subcommand("train-diffusion", "Train the conditional noise model on domain B");
    add_common(td, c);

    bool without_eps_hat = false;
    auto* tr = app.add_subcommand("train-deform", "Train the registration net");
    add_common(tr, c);
    tr->add_flag("--without-eps-hat", without_eps_hat, "Feed zeros instead of the estimated noise");

    std::string image, case_id;
    auto* tl = app.add_subcommand("translate", "Translate held-out domain A cases (or one PGM) into bundles");
    add_common(tl, c);
    tl->add_option("--image", image, "Translate this PGM instead of the held-out set");
    tl->add_option("--id", case_id, "Case id for --image (default: file stem)");

    auto* ev = app.add_subcommand("evaluate", "Score bundles against source masks");
    add_common(ev, c);

    std::string bind = "127.0.0.1:8080";
    std::string bundle_dir;
    auto* sv = app.add_subcommand("serve", "Serve bundles over HTTP");
    add_common(sv, c);
    sv->add_option("--bind", bind, "host:port")->capture_default_str();
    sv->add_option("--bundles", bundle_dir, "Bundle directory (default: <out>/bundles)");

    std::uint64_t gc_seed = 1;
    int gc_seeds = 20;
    double gc_tol = 1e-4;
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every loss");
    gc->add_option("--seed", gc_seed, "First seed")->capture_default_str();
    gc->add_option("--seeds", gc_seeds, "Number of seeds")->capture_default_str();
    gc->add_option("--tolerance", gc_tol, "Relative error bound")->capture_default_str();

    auto* all = app.add_subcommand("run", "All stages in sequence");
    add_common(all, c);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) gen_data(c);
        if (*td) train_diffusion_cmd(c);
        if (*tr) train_deform_cmd(c, without_eps_hat);
        if (*tl) translate_cmd(c, image, case_id);
        if (*ev) evaluate_cmd(c);
        if (*sv) serve_cmd(c, bundle_dir, bind);
        if (*gc) return gradcheck_cmd(gc_seed, gc_seeds, gc_tol);
        if (*all) {
            const RunArtifacts r = run_pipeline(resolve_config(c), c.out, &std::cerr);
            std::cout << r.report.format();
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
