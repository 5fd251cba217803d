#pragma once

// Traceability evaluation: segment the translated image, pull the prediction
// back to the source frame with the inverse field, and score it against the
// source mask.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tracediff/pipeline/bundle.hpp"
#include "tracediff/pipeline/segmentation.hpp"

namespace tracediff {

struct CaseMetrics {
    std::string id;
    MaskMetrics traced;    // segment(translated) o phi^-1 vs source mask
    MaskMetrics baseline;  // segment(source) vs source mask
};

struct EvaluationReport {
    std::vector<CaseMetrics> cases;
    MaskMetrics traced;
    MaskMetrics baseline;
    double bhattacharyya_translated = 0.0;  // translated set vs target set
    double bhattacharyya_source = 0.0;      // source set vs target set
    double sfd_translated = 0.0;
    double sfd_source = 0.0;

    std::string format() const;
};

// m_hat o phi^-1 as a binary mask in the source frame.
Image2D traced_mask(const SegModel& seg, const TraceBundle& bundle);

EvaluationReport evaluate_traceability(const std::vector<TraceBundle>& bundles, const SegModel& seg,
                                       const std::map<std::string, Image2D>& source_masks,
                                       const std::vector<Image2D>& target_images, int bins = 32);

void write_report(const std::filesystem::path& path, const EvaluationReport& report);

}  // namespace tracediff
