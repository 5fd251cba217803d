#pragma once

// Target-domain segmenters and mask metrics.

#include <cstdint>
#include <vector>

#include "tracediff/grid.hpp"
#include "tracediff/networks.hpp"
#include "tracediff/pipeline/config.hpp"
#include "tracediff/pipeline/dataset.hpp"

namespace tracediff {

struct SegModel {
    SegmenterKind kind = SegmenterKind::Threshold;
    double threshold = 0.5;
    bool foreground_bright = true;
    ModelParams net;  // Net variant only
};

// Otsu threshold over pooled intensities quantised to `levels` bins on [0,1].
double otsu_threshold(const std::vector<Image2D>& images, int levels = 256);

// Keeps the largest 4-connected foreground component (ties: first in raster order).
Image2D largest_component(const Image2D& mask);

SegModel fit_segmenter(const std::vector<SyntheticCase>& labelled, SegmenterKind kind = SegmenterKind::Threshold,
                       std::uint64_t seed = 0, int net_steps = 300);

Image2D segment(const SegModel& model, const Image2D& img);

struct MaskMetrics {
    double accuracy = 0.0;
    double dice = 0.0;
    double iou = 0.0;   // foreground
    double miou = 0.0;  // mean of foreground and background IoU
};

// Masks are binarised at 0.5. Empty-vs-empty scores 1.
MaskMetrics mask_metrics(const Image2D& pred, const Image2D& truth);

MaskMetrics mean_metrics(const std::vector<MaskMetrics>& all);

}  // namespace tracediff
