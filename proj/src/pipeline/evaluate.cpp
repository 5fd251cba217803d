#include "tracediff/pipeline/evaluate.hpp"

#include <cstdio>

#include "tracediff/grid_io.hpp"
#include "tracediff/similarity.hpp"

namespace tracediff {

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string metrics_line(const MaskMetrics& m) {
    return "acc=" + num(m.accuracy) + " dice=" + num(m.dice) + " iou=" + num(m.iou) + " miou=" + num(m.miou);
}

}  // namespace

Image2D traced_mask(const SegModel& seg, const TraceBundle& bundle) {
    const Image2D pred = segment(seg, bundle.translated);
    Image2D back = warp(pred, bundle.inverse_field);
    for (float& v : back.data()) v = v >= 0.5f ? 1.0f : 0.0f;
    return back;
}

EvaluationReport evaluate_traceability(const std::vector<TraceBundle>& bundles, const SegModel& seg,
                                       const std::map<std::string, Image2D>& source_masks,
                                       const std::vector<Image2D>& target_images, int bins) {
    if (bundles.empty()) throw std::invalid_argument("evaluate_traceability: no bundles");
    EvaluationReport r;
    std::vector<MaskMetrics> traced, baseline;
    std::vector<Image2D> translated, sources;
    for (const TraceBundle& b : bundles) {
        auto it = source_masks.find(b.case_id);
        if (it == source_masks.end()) throw std::invalid_argument("no source mask for case " + b.case_id);
        if (b.translated.empty() || b.source.empty()) throw std::invalid_argument("bundle " + b.case_id + " is incomplete");
        CaseMetrics c;
        c.id = b.case_id;
        c.traced = mask_metrics(traced_mask(seg, b), it->second);
        c.baseline = mask_metrics(segment(seg, b.source), it->second);
        traced.push_back(c.traced);
        baseline.push_back(c.baseline);
        r.cases.push_back(c);
        translated.push_back(b.translated);
        sources.push_back(b.source);
    }
    r.traced = mean_metrics(traced);
    r.baseline = mean_metrics(baseline);
    const Histogram target = intensity_histogram(target_images, bins);
    r.bhattacharyya_translated = bhattacharyya_distance(intensity_histogram(translated, bins), target);
    r.bhattacharyya_source = bhattacharyya_distance(intensity_histogram(sources, bins), target);
    r.sfd_translated = simplified_frechet(translated, target_images);
    r.sfd_source = simplified_frechet(sources, target_images);
    return r;
}

std::string EvaluationReport::format() const {
    std::string out;
    for (const CaseMetrics& c : cases) {
        out += "case " + c.id + " traced " + metrics_line(c.traced) + " baseline " + metrics_line(c.baseline) + "\n";
    }
    out += "aggregate traced " + metrics_line(traced) + "\n";
    out += "aggregate baseline " + metrics_line(baseline) + "\n";
    out += "distribution bhattacharyya_translated=" + num(bhattacharyya_translated) +
           " bhattacharyya_source=" + num(bhattacharyya_source) + " sfd_translated=" + num(sfd_translated) +
           " sfd_source=" + num(sfd_source) + "\n";
    return out;
}

void write_report(const std::filesystem::path& path, const EvaluationReport& report) {
    const std::string text = report.format();
    write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

}  // namespace tracediff
