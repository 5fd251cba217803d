#include "tracediff/pipeline/segmentation.hpp"

#include <algorithm>
#include <cmath>

#include "tracediff/deformation.hpp"

namespace tracediff {

namespace {

ModelParams init_seg_net(std::uint64_t seed) {
    ModelParams p;
    p.init_seed = seed;
    Rng rng(seed);
    auto uniform = [&](const std::string& name, ad::Shape s, int fan_in) {
        ad::Tensor t(s);
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double& v : t.data) v = rng.uniform(-bound, bound);
        p.tensors.emplace(name, std::move(t));
    };
    uniform("c1.w", {4, 1, 9}, 9);
    p.tensors.emplace("c1.b", ad::Tensor({4, 1, 1}));
    uniform("c2.w", {4, 4, 9}, 36);
    p.tensors.emplace("c2.b", ad::Tensor({4, 1, 1}));
    uniform("out.w", {1, 4, 1}, 4);
    p.tensors.emplace("out.b", ad::Tensor({1, 1, 1}));
    return p;
}

ad::Var seg_logits(ad::Tape& t, const BoundParams& p, ad::Var x) {
    ad::Var h = ad::silu(t, ad::conv2d(t, x, p["c1.w"], p["c1.b"]));
    h = ad::silu(t, ad::conv2d(t, h, p["c2.w"], p["c2.b"]));
    return ad::conv2d(t, h, p["out.w"], p["out.b"]);
}

Image2D threshold_image(const Image2D& img, double thr, bool bright) {
    Image2D m(img.height(), img.width());
    for (std::size_t i = 0; i < img.size(); ++i) {
        const bool above = img.data()[i] > thr;
        m.data()[i] = above == bright ? 1.0f : 0.0f;
    }
    return m;
}

}  // namespace

double otsu_threshold(const std::vector<Image2D>& images, int levels) {
    if (images.empty()) throw std::invalid_argument("otsu_threshold: no images");
    std::vector<double> hist(levels, 0.0);
    double n = 0.0;
    for (const Image2D& img : images) {
        for (float v : img.data()) {
            const int b = std::clamp(static_cast<int>(std::clamp(v, 0.0f, 1.0f) * levels), 0, levels - 1);
            hist[b] += 1.0;
            n += 1.0;
        }
    }
    double total_mean = 0.0;
    for (int i = 0; i < levels; ++i) total_mean += i * hist[i] / n;
    double w0 = 0.0;
    double sum0 = 0.0;
    double best = -1.0;
    int best_i = 0;
    for (int i = 0; i < levels - 1; ++i) {
        w0 += hist[i] / n;
        sum0 += i * hist[i] / n;
        if (w0 <= 0.0 || w0 >= 1.0) continue;
        const double m0 = sum0 / w0;
        const double m1 = (total_mean - sum0) / (1.0 - w0);
        const double between = w0 * (1.0 - w0) * (m0 - m1) * (m0 - m1);
        if (between > best) {
            best = between;
            best_i = i;
        }
    }
    return static_cast<double>(best_i + 1) / levels;
}

Image2D largest_component(const Image2D& mask) {
    const int h = mask.height();
    const int w = mask.width();
    std::vector<int> comp(mask.size(), -1);
    std::vector<std::size_t> sizes;
    std::vector<int> stack;
    for (int start = 0; start < static_cast<int>(mask.size()); ++start) {
        if (mask.data()[start] < 0.5f || comp[start] >= 0) continue;
        const int id = static_cast<int>(sizes.size());
        std::size_t count = 0;
        stack.assign(1, start);
        comp[start] = id;
        while (!stack.empty()) {
            const int p = stack.back();
            stack.pop_back();
            ++count;
            const int r = p / w;
            const int c = p % w;
            const int nb[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
            for (const auto& q : nb) {
                if (q[0] < 0 || q[0] >= h || q[1] < 0 || q[1] >= w) continue;
                const int j = q[0] * w + q[1];
                if (mask.data()[j] >= 0.5f && comp[j] < 0) {
                    comp[j] = id;
                    stack.push_back(j);
                }
            }
        }
        sizes.push_back(count);
    }
    Image2D out(h, w);
    if (sizes.empty()) return out;
    const int keep = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
    for (std::size_t i = 0; i < comp.size(); ++i) out.data()[i] = comp[i] == keep ? 1.0f : 0.0f;
    return out;
}

SegModel fit_segmenter(const std::vector<SyntheticCase>& labelled, SegmenterKind kind, std::uint64_t seed,
                       int net_steps) {
    if (labelled.empty()) throw std::invalid_argument("fit_segmenter: empty labelled set");
    SegModel m;
    m.kind = kind;
    if (kind == SegmenterKind::Threshold) {
        m.threshold = otsu_threshold(images_of(labelled));
        double best = -1.0;
        for (bool bright : {true, false}) {
            double dice = 0.0;
            for (const SyntheticCase& c : labelled) {
                dice += mask_metrics(largest_component(threshold_image(c.image, m.threshold, bright)), c.mask).dice;
            }
            if (dice > best) {
                best = dice;
                m.foreground_bright = bright;
            }
        }
        return m;
    }

    m.net = init_seg_net(seed);
    AdamState adam;
    Rng rng(derive_seed(seed, 1));
    const int n = static_cast<int>(labelled.size());
    for (int step = 0; step < net_steps; ++step) {
        const SyntheticCase& c = labelled[rng.uniform_int(0, n - 1)];
        ad::Tape t;
        const BoundParams p(t, m.net, true);
        const ad::Var loss = ad::bce_with_logits(t, seg_logits(t, p, t.constant(to_tensor(c.image))),
                                                 t.constant(to_tensor(c.mask)));
        t.backward(loss);
        adam_step(m.net, t.parameter_grads(), adam, 1e-2);
    }
    return m;
}

Image2D segment(const SegModel& model, const Image2D& img) {
    if (model.kind == SegmenterKind::Threshold) {
        return largest_component(threshold_image(img, model.threshold, model.foreground_bright));
    }
    ad::Tape t;
    const BoundParams p(t, model.net, false);
    const ad::Var z = seg_logits(t, p, t.constant(to_tensor(img)));
    Image2D logits = image_from_tensor(t.value(z), img.height(), img.width());
    return largest_component(threshold_image(logits, 0.0, true));
}

MaskMetrics mask_metrics(const Image2D& pred, const Image2D& truth) {
    if (!pred.same_shape(truth)) throw DimensionError("mask_metrics: shapes differ");
    double tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred.data()[i] >= 0.5f;
        const bool g = truth.data()[i] >= 0.5f;
        if (p && g) {
            ++tp;
        } else if (p) {
            ++fp;
        } else if (g) {
            ++fn;
        } else {
            ++tn;
        }
    }
    MaskMetrics m;
    m.accuracy = (tp + tn) / static_cast<double>(pred.size());
    m.dice = tp + fp + fn == 0 ? 1.0 : 2.0 * tp / (2.0 * tp + fp + fn);
    m.iou = tp + fp + fn == 0 ? 1.0 : tp / (tp + fp + fn);
    const double iou_bg = tn + fp + fn == 0 ? 1.0 : tn / (tn + fp + fn);
    m.miou = 0.5 * (m.iou + iou_bg);
    return m;
}

MaskMetrics mean_metrics(const std::vector<MaskMetrics>& all) {
    MaskMetrics m;
    if (all.empty()) return m;
    for (const MaskMetrics& x : all) {
        m.accuracy += x.accuracy;
        m.dice += x.dice;
        m.iou += x.iou;
        m.miou += x.miou;
    }
    const double n = static_cast<double>(all.size());
    m.accuracy /= n;
    m.dice /= n;
    m.iou /= n;
    m.miou /= n;
    return m;
}

}  // namespace tracediff
