#include "tracediff/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "tracediff/deformation.hpp"
#include "tracediff/kernels.hpp"

namespace tracediff {

namespace {

constexpr double kMinJointEntropy = 1e-6;

double plogp_sum(std::span<const double> p) {
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) h -= v * std::log(v);
    }
    return h;
}

// dH/dp = -(ln p + 1), taken as 0 where p underflowed to 0.
double dentropy(double p) { return p > 0.0 ? -(std::log(p) + 1.0) : 0.0; }

struct MiCore {
    double value = 0.0;
    std::vector<double> grad_a;
    std::vector<double> grad_b;
};

// Gradient of the loss through one image's kernel weights.
// G holds dL/dw (n x bins) for that image.
void weights_to_values(std::span<const double> values, std::span<const double> w,
                       std::span<const double> G, const ParzenConfig& cfg, std::span<double> out) {
    const int bins = cfg.bins;
    const double inv_s2 = 1.0 / (cfg.sigma() * cfg.sigma());
    const int n = static_cast<int>(values.size());
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const double v = values[i];
        if (v < cfg.lo || v > cfg.hi) {
            out[i] = 0.0;
            continue;
        }
        const double* wi = w.data() + static_cast<std::size_t>(i) * bins;
        const double* gi = G.data() + static_cast<std::size_t>(i) * bins;
        double gbar = 0.0;
        for (int j = 0; j < bins; ++j) gbar += wi[j] * (-(v - cfg.centre(j)) * inv_s2);
        double acc = 0.0;
        for (int j = 0; j < bins; ++j) {
            const double g = -(v - cfg.centre(j)) * inv_s2;
            acc += gi[j] * wi[j] * (g - gbar);
        }
        out[i] = acc;
    }
}

MiCore mi_core(std::span<const double> a, std::span<const double> b, const ParzenConfig& cfg,
               bool want_a, bool want_b) {
    cfg.validate();
    if (a.size() != b.size()) throw DimensionError("mutual information: image sizes differ");
    if (a.empty()) throw DimensionError("mutual information: empty images");
    const int n = static_cast<int>(a.size());
    const int bins = cfg.bins;
    const std::vector<double> wa = parzen_weights(a, cfg);
    const std::vector<double> wb = parzen_weights(b, cfg);

    std::vector<double> joint(static_cast<std::size_t>(bins) * bins);
    kernels::joint_histogram(wa, wb, n, bins, joint);
    std::vector<double> pa(bins, 0.0);
    std::vector<double> pb(bins, 0.0);
    for (int i = 0; i < bins; ++i) {
        for (int j = 0; j < bins; ++j) {
            pa[i] += joint[static_cast<std::size_t>(i) * bins + j];
            pb[j] += joint[static_cast<std::size_t>(i) * bins + j];
        }
    }
    const double ha = plogp_sum(pa);
    const double hb = plogp_sum(pb);
    const double hj = plogp_sum(joint);
    if (hj < kMinJointEntropy) {
        throw DegenerateEntropyError("mutual information: joint entropy " + std::to_string(hj) +
                                     " below " + std::to_string(kMinJointEntropy));
    }
    MiCore out;
    out.value = (ha + hb) / hj;
    if (!want_a && !want_b) return out;

    // dL/dp for marginals and joint.
    std::vector<double> da(bins), db(bins), dj(joint.size());
    for (int i = 0; i < bins; ++i) {
        da[i] = dentropy(pa[i]) / hj;
        db[i] = dentropy(pb[i]) / hj;
    }
    const double cj = -(ha + hb) / (hj * hj);
    for (std::size_t k = 0; k < joint.size(); ++k) dj[k] = cj * dentropy(joint[k]);

    const double inv_n = 1.0 / n;
    auto side = [&](const std::vector<double>& w_self, const std::vector<double>& w_other,
                    const std::vector<double>& dmarg, bool self_is_row, std::span<const double> values) {
        std::vector<double> G(w_self.size());
#pragma omp parallel for schedule(static)
        for (int p = 0; p < n; ++p) {
            const double* wo = w_other.data() + static_cast<std::size_t>(p) * bins;
            double* g = G.data() + static_cast<std::size_t>(p) * bins;
            for (int s = 0; s < bins; ++s) {
                double acc = dmarg[s];
                for (int o = 0; o < bins; ++o) {
                    const std::size_t k = self_is_row ? static_cast<std::size_t>(s) * bins + o
                                                      : static_cast<std::size_t>(o) * bins + s;
                    acc += dj[k] * wo[o];
                }
                g[s] = acc * inv_n;
            }
        }
        std::vector<double> grad(n);
        weights_to_values(values, w_self, G, cfg, grad);
        return grad;
    };
    if (want_a) out.grad_a = side(wa, wb, da, true, a);
    if (want_b) out.grad_b = side(wb, wa, db, false, b);
    return out;
}

std::vector<double> as_double(const Image2D& img) {
    return std::vector<double>(img.data().begin(), img.data().end());
}

Histogram hist_from_weights(const std::vector<double>& w, int n, int bins) {
    Histogram h;
    h.cols = bins;
    h.p.assign(bins, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < bins; ++j) h.p[j] += w[static_cast<std::size_t>(i) * bins + j];
    }
    for (double& v : h.p) v /= n;
    return h;
}

}  // namespace

void ParzenConfig::validate() const {
    if (bins < 2) throw std::invalid_argument("Parzen histogram needs at least 2 bins");
    if (!(hi > lo)) throw std::invalid_argument("Parzen value range is empty");
    if (!(sigma() > 0.0)) throw std::invalid_argument("Parzen window must be positive");
}

double Histogram::total() const { return std::accumulate(p.begin(), p.end(), 0.0); }

std::vector<double> parzen_weights(std::span<const double> values, const ParzenConfig& cfg) {
    cfg.validate();
    const int bins = cfg.bins;
    const double inv_2s2 = 1.0 / (2.0 * cfg.sigma() * cfg.sigma());
    const int n = static_cast<int>(values.size());
    std::vector<double> w(static_cast<std::size_t>(n) * bins);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const double v = std::clamp(values[i], cfg.lo, cfg.hi);
        double* wi = w.data() + static_cast<std::size_t>(i) * bins;
        double s = 0.0;
        for (int j = 0; j < bins; ++j) {
            const double d = v - cfg.centre(j);
            wi[j] = std::exp(-d * d * inv_2s2);
            s += wi[j];
        }
        for (int j = 0; j < bins; ++j) wi[j] /= s;
    }
    return w;
}

Histogram parzen_histogram(const Image2D& img, const ParzenConfig& cfg) {
    const std::vector<double> v = as_double(img);
    return hist_from_weights(parzen_weights(v, cfg), static_cast<int>(v.size()), cfg.bins);
}

Histogram joint_parzen_histogram(const Image2D& a, const Image2D& b, const ParzenConfig& cfg) {
    if (!a.same_shape(b)) throw DimensionError("joint histogram: image shapes differ");
    cfg.validate();
    const std::vector<double> wa = parzen_weights(as_double(a), cfg);
    const std::vector<double> wb = parzen_weights(as_double(b), cfg);
    Histogram h;
    h.rows = cfg.bins;
    h.cols = cfg.bins;
    h.p.resize(static_cast<std::size_t>(cfg.bins) * cfg.bins);
    kernels::joint_histogram(wa, wb, static_cast<int>(a.size()), cfg.bins, h.p);
    return h;
}

Histogram marginal(const Histogram& joint, int axis) {
    Histogram m;
    m.cols = axis == 0 ? joint.cols : joint.rows;
    m.p.assign(m.cols, 0.0);
    for (int i = 0; i < joint.rows; ++i) {
        for (int j = 0; j < joint.cols; ++j) m.p[axis == 0 ? j : i] += joint(i, j);
    }
    return m;
}

double entropy(const Histogram& h) { return plogp_sum(h.p); }

MiResult mi_loss(const Image2D& fixed, const Image2D& moving, const ParzenConfig& cfg) {
    if (!fixed.same_shape(moving)) throw DimensionError("mi_loss: image shapes differ");
    const MiCore core = mi_core(as_double(fixed), as_double(moving), cfg, false, true);
    return {core.value, image_from_tensor(core.grad_b, moving.height(), moving.width())};
}

DataLossResult data_loss(const Image2D& x, const Image2D& y, const VectorField2D& v,
                         const VectorField2D& v_inv, const ParzenConfig& cfg, int integration_steps) {
    if (!x.same_shape(y) || !v.same_shape(x) || !v_inv.same_shape(x)) {
        throw DimensionError("data_loss: grid shapes differ");
    }
    ad::Tape t;
    const ad::Var xv = t.constant(to_tensor(x));
    const ad::Var yv = t.constant(to_tensor(y));
    const ad::Var vv = t.variable(to_tensor(v));
    const ad::Var vi = t.variable(to_tensor(v_inv));
    const ad::Var loss = ad::data_loss(t, xv, yv, vv, vi, cfg, integration_steps);
    t.backward(loss);
    return {t.scalar(loss), field_from_tensor(t.grad(vv), x.height(), x.width()),
            field_from_tensor(t.grad(vi), x.height(), x.width())};
}

double feature_alignment_loss(const ad::Tensor& feat_pred, const ad::Tensor& feat_target) {
    if (!(feat_pred.shape == feat_target.shape)) {
        throw ad::ShapeError("feature alignment: " + feat_pred.shape.str() + " vs " +
                             feat_target.shape.str());
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < feat_pred.data.size(); ++i) {
        const double d = feat_pred.data[i] - feat_target.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(feat_pred.data.size());
}

double bhattacharyya_distance(const Histogram& p, const Histogram& q) {
    if (p.p.size() != q.p.size()) throw std::invalid_argument("Bhattacharyya: bin counts differ");
    double bc = 0.0;
    for (std::size_t i = 0; i < p.p.size(); ++i) bc += std::sqrt(p.p[i] * q.p[i]);
    return -std::log(std::max(bc, 1e-12));
}

namespace {

std::pair<double, double> pooled_moments(const std::vector<Image2D>& set) {
    std::size_t n = 0;
    double sum = 0.0;
    for (const Image2D& img : set) {
        for (float v : img.data()) sum += v;
        n += img.size();
    }
    if (n == 0) throw std::invalid_argument("simplified_frechet: empty image set");
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const Image2D& img : set) {
        for (float v : img.data()) ss += (v - mean) * (v - mean);
    }
    return {mean, std::sqrt(ss / static_cast<double>(n))};
}

}  // namespace

double simplified_frechet(const std::vector<Image2D>& a, const std::vector<Image2D>& b) {
    const auto [ma, sa] = pooled_moments(a);
    const auto [mb, sb] = pooled_moments(b);
    return (ma - mb) * (ma - mb) + (sa - sb) * (sa - sb);
}

Histogram intensity_histogram(const std::vector<Image2D>& images, int bins, double lo, double hi) {
    if (bins < 1 || !(hi > lo)) throw std::invalid_argument("intensity_histogram: bad binning");
    Histogram h;
    h.cols = bins;
    h.p.assign(bins, 0.0);
    std::size_t n = 0;
    for (const Image2D& img : images) {
        for (float v : img.data()) {
            const double t = (std::clamp(static_cast<double>(v), lo, hi) - lo) / (hi - lo);
            h.p[std::min(bins - 1, static_cast<int>(t * bins))] += 1.0;
        }
        n += img.size();
    }
    if (n == 0) throw std::invalid_argument("intensity_histogram: no pixels");
    for (double& v : h.p) v /= static_cast<double>(n);
    return h;
}

namespace ad {

Var mutual_information(Tape& t, Var a, Var b, const ParzenConfig& cfg) {
    if (!(t.shape(a) == t.shape(b))) {
        throw ShapeError("mutual_information: " + t.shape(a).str() + " vs " + t.shape(b).str());
    }
    const bool ga = t.requires_grad(a);
    const bool gb = t.requires_grad(b);
    auto core = std::make_shared<MiCore>(mi_core(t.value(a), t.value(b), cfg, ga, gb));
    return t.push({1, 1, 1}, {core->value}, {a, b}, [a, b, ga, gb, core](Tape& tp, int self) {
        const double up = tp.grad(self)[0];
        if (ga) {
            std::vector<double>& g = tp.grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += up * core->grad_a[i];
        }
        if (gb) {
            std::vector<double>& g = tp.grad(b);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += up * core->grad_b[i];
        }
    });
}

Var data_loss(Tape& t, Var x, Var y, Var v, Var v_inv, const ParzenConfig& cfg,
              int integration_steps) {
    const Var phi = integrate(t, v, integration_steps);
    const Var phi_inv = integrate(t, v_inv, integration_steps);
    const Var forward = mutual_information(t, y, resample(t, x, phi), cfg);
    const Var backward = mutual_information(t, x, resample(t, y, phi_inv), cfg);
    return add(t, forward, backward);
}

Var feature_alignment(Tape& t, Var feat_pred, Var feat_target) {
    return mean_square_diff(t, feat_pred, stop_gradient(t, feat_target));
}

DeformationTerms deformation_objective(Tape& t, Var x, Var y, Var v, Var v_inv, Var feat_pred,
                                       Var feat_target, double lambda1, const ParzenConfig& cfg,
                                       int integration_steps) {
    DeformationTerms terms;
    terms.data = data_loss(t, x, y, v, v_inv, cfg, integration_steps);
    terms.smooth = add(t, smoothness(t, v), smoothness(t, v_inv));
    terms.align = feature_alignment(t, feat_pred, feat_target);
    terms.objective = add(t, sub(t, scale(t, terms.smooth, lambda1), terms.data), terms.align);
    return terms;
}

}  // namespace ad

}  // namespace tracediff
