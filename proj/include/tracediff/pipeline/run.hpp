#pragma once

// The whole benchmark: data, both trainings, translation of held-out source
// cases, and evaluation. Every artifact lands under one output directory.

#include <filesystem>
#include <ostream>
#include <vector>

#include "tracediff/checkpoint.hpp"
#include "tracediff/pipeline/bundle.hpp"
#include "tracediff/pipeline/config.hpp"
#include "tracediff/pipeline/dataset.hpp"
#include "tracediff/pipeline/evaluate.hpp"
#include "tracediff/pipeline/segmentation.hpp"

namespace tracediff {

struct Split {
    std::vector<SyntheticCase> train;
    std::vector<SyntheticCase> test;
};

Split split_cases(const std::vector<SyntheticCase>& cases, double holdout_fraction);

// Translates each case, writes its bundle under bundle_root/<id>, and returns
// the bundles as read back from disk.
std::vector<TraceBundle> translate_cases(const std::vector<SyntheticCase>& cases, const Checkpoint& diffusion,
                                         const Checkpoint& regnet, const PipelineConfig& cfg,
                                         const std::filesystem::path& bundle_root);

std::vector<TraceBundle> read_bundles(const std::filesystem::path& bundle_root);

struct RunArtifacts {
    Dataset data;
    Checkpoint diffusion;
    Checkpoint regnet;
    std::vector<double> diffusion_losses;
    std::vector<double> deform_losses;
    SegModel segmenter;
    std::vector<TraceBundle> bundles;
    EvaluationReport report;
};

// Layout: config.txt, dataset/, diffusion.ckpt, regnet.ckpt, diffusion_loss.txt,
// deform_loss.txt, bundles/<id>/, report.txt.
RunArtifacts run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out_dir,
                          std::ostream* log = nullptr);

void write_losses(const std::filesystem::path& path, const std::vector<double>& losses);

}  // namespace tracediff
