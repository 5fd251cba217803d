#include "tracediff/networks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "tracediff/deformation.hpp"

namespace tracediff {

namespace {

using ad::Shape;
using ad::Tensor;
using ad::Var;

class Builder {
public:
    Builder(ModelParams& p, Rng& rng) : p_(p), rng_(rng) {}

    void zeros(const std::string& name, Shape s) { add(name, Tensor(s, 0.0)); }
    void ones(const std::string& name, Shape s) { add(name, Tensor(s, 1.0)); }

    // Fan-in scaled uniform.
    void uniform(const std::string& name, Shape s, int fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Tensor t(s);
        for (double& v : t.data) v = rng_.uniform(-bound, bound);
        add(name, std::move(t));
    }

    void conv(const std::string& name, int cout, int cin, int k, bool bias, bool zero = false) {
        const Shape ws{cout, cin, k * k};
        if (zero) {
            zeros(name + ".w", ws);
        } else {
            uniform(name + ".w", ws, cin * k * k);
        }
        if (bias) zeros(name + ".b", {cout, 1, 1});
    }

    void block(const std::string& name, int cout, int cin, int emb_dim) {
        conv(name + ".conv", cout, cin, 3, true);
        ones(name + ".gn.g", {cout, 1, 1});
        zeros(name + ".gn.b", {cout, 1, 1});
        if (emb_dim > 0) {
            zeros(name + ".emb.w", {cout, emb_dim, 1});
            zeros(name + ".emb.b", {cout, 1, 1});
        }
    }

    void unet(int in_channels, const NetConfig& cfg, int emb_dim) {
        const int c = cfg.base_channels;
        for (int l = 0; l < cfg.depth; ++l) block("enc" + std::to_string(l), c, l == 0 ? in_channels : c, emb_dim);
        for (int l = cfg.depth - 2; l >= 0; --l) block("dec" + std::to_string(l), c, 2 * c, emb_dim);
    }

private:
    void add(const std::string& name, Tensor t) {
        if (!p_.tensors.emplace(name, std::move(t)).second) {
            throw std::logic_error("duplicate parameter " + name);
        }
    }

    ModelParams& p_;
    Rng& rng_;
};

Var block(ad::Tape& t, const BoundParams& p, const std::string& name, Var x, Var emb, int groups) {
    Var h = ad::conv2d(t, x, p[name + ".conv.w"], p[name + ".conv.b"]);
    h = ad::group_norm(t, h, groups, p[name + ".gn.g"], p[name + ".gn.b"]);
    if (emb.valid()) h = ad::add_channel_bias(t, h, ad::linear(t, emb, p[name + ".emb.w"], p[name + ".emb.b"]));
    return ad::silu(t, h);
}

Var unet(ad::Tape& t, const NetConfig& cfg, const BoundParams& p, Var x, Var emb) {
    const Shape s = t.shape(x);
    const int factor = 1 << (cfg.depth - 1);
    if (s.height % factor || s.width % factor) {
        throw ad::ShapeError("input " + s.str() + " not divisible by 2^" + std::to_string(cfg.depth - 1));
    }
    const int groups = cfg.groups();
    std::vector<Var> skips;
    Var h = x;
    for (int l = 0; l < cfg.depth; ++l) {
        if (l > 0) h = ad::avg_pool2(t, h);
        h = block(t, p, "enc" + std::to_string(l), h, emb, groups);
        skips.push_back(h);
    }
    for (int l = cfg.depth - 2; l >= 0; --l) {
        h = ad::concat(t, ad::upsample2(t, h), skips[l]);
        h = block(t, p, "dec" + std::to_string(l), h, emb, groups);
    }
    return h;
}

double log_noise(double gamma) { return std::log(std::max(1.0 - gamma, 1e-12)); }

void check_image_pair(const Image2D& a, const Image2D& b, const char* op) {
    if (!a.same_shape(b)) throw DimensionError(std::string(op) + ": image shapes differ");
}

}  // namespace

void NetConfig::validate() const {
    if (depth < 1) throw std::invalid_argument("network depth must be >= 1");
    if (base_channels < 1 || feature_channels < 1 || gamma_embedding_dim < 1) {
        throw std::invalid_argument("network channel counts must be >= 1");
    }
}

int NetConfig::groups() const {
    for (int g : {4, 2}) {
        if (base_channels % g == 0 && base_channels / g >= 2) return g;
    }
    return 1;
}

std::size_t ModelParams::count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : tensors) n += t.data.size();
    return n;
}

const ad::Tensor& ModelParams::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw std::out_of_range("no parameter named " + name);
    return it->second;
}

bool ModelParams::operator==(const ModelParams& other) const {
    if (init_seed != other.init_seed || tensors.size() != other.tensors.size()) return false;
    for (const auto& [name, t] : tensors) {
        auto it = other.tensors.find(name);
        if (it == other.tensors.end() || !(it->second.shape == t.shape) || it->second.data != t.data) {
            return false;
        }
    }
    return true;
}

BoundParams::BoundParams(ad::Tape& tape, const ModelParams& params, bool trainable) {
    for (const auto& [name, t] : params.tensors) {
        vars_[name] = trainable ? tape.parameter(name, t) : tape.constant(t);
    }
}

ad::Var BoundParams::operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw std::out_of_range("parameter not bound: " + name);
    return it->second;
}

ModelParams init_denoiser(const NetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelParams p;
    p.init_seed = seed;
    Rng rng(seed);
    Builder b(p, rng);
    const int e = cfg.gamma_embedding_dim;
    b.uniform("emb.w", {e, 2, 1}, 2);
    b.zeros("emb.b", {e, 1, 1});
    b.unet(2, cfg, e);
    b.conv("head", 1, cfg.base_channels, 1, true, true);
    b.conv("skip", 1, 2, 1, false, true);
    b.zeros("gain", {1, 2, 1});
    return p;
}

ModelParams init_regnet(const NetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelParams p;
    p.init_seed = seed;
    Rng rng(seed);
    Builder b(p, rng);
    const int f = cfg.feature_channels;
    b.conv("pred.c1", f, 1, 3, true);
    b.conv("pred.c2", f, f, 3, true);
    b.conv("aux.y", f, 1, 3, true);
    b.conv("aux.eps", f, 1, 3, false, true);
    b.conv("aux.c2", f, f, 3, true);
    b.unet(1 + f, cfg, 0);
    b.conv("vhead", 2, cfg.base_channels, 3, true, true);
    b.conv("ihead", 2, cfg.base_channels, 3, true, true);
    return p;
}

void perturb(ModelParams& params, Rng& rng, double scale) {
    for (auto& [name, t] : params.tensors) {
        for (double& v : t.data) v += rng.uniform(-scale, scale);
    }
}

ad::Var denoiser_forward(ad::Tape& t, const NetConfig& cfg, const BoundParams& p, ad::Var condition,
                         ad::Var noisy, double gamma) {
    if (!(t.shape(condition) == t.shape(noisy)) || t.shape(noisy).channels != 1) {
        throw ad::ShapeError("denoiser: condition " + t.shape(condition).str() + " and noisy " +
                             t.shape(noisy).str() + " must be matching single-channel grids");
    }
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("denoiser: gamma outside (0, 1]");
    const Var level = t.constant({2, 1, 1}, {std::log(gamma), log_noise(gamma)});
    const Var emb = ad::silu(t, ad::linear(t, level, p["emb.w"], p["emb.b"]));
    const Var x = ad::concat(t, condition, noisy);
    const Var h = unet(t, cfg, p, x, emb);
    const Var out = ad::add(t, ad::conv2d(t, h, p["head.w"], p["head.b"]),
                            ad::conv2d(t, x, p["skip.w"], Var{}));
    const Var gain_in = t.constant({2, 1, 1}, {log_noise(gamma), 1.0});
    const Var gain = ad::exp(t, ad::linear(t, gain_in, p["gain"], Var{}));
    return ad::mul_scalar(t, out, gain);
}

Image2D denoiser_forward(const NetConfig& cfg, const ModelParams& params, const Image2D& condition,
                         const Image2D& noisy, double gamma) {
    check_image_pair(condition, noisy, "denoiser");
    ad::Tape t;
    const BoundParams p(t, params, false);
    const Var out = denoiser_forward(t, cfg, p, t.constant(to_tensor(condition)),
                                     t.constant(to_tensor(noisy)), gamma);
    return image_from_tensor(t.value(out), noisy.height(), noisy.width());
}

NoiseModel make_noise_model(const NetConfig& cfg, const ModelParams& params) {
    auto shared = std::make_shared<const ModelParams>(params);
    return [cfg, shared](const Image2D& condition, const Image2D& noisy, double gamma) {
        return denoiser_forward(cfg, *shared, condition, noisy, gamma);
    };
}

DifferentiableNoiseModel make_trainable_noise_model(const NetConfig& cfg, const ModelParams& params) {
    return [cfg, &params](ad::Tape& t, Var condition, Var noisy, double gamma) {
        const BoundParams p(t, params, true);
        return denoiser_forward(t, cfg, p, condition, noisy, gamma);
    };
}

ad::Var aux_encoder(ad::Tape& t, const NetConfig&, const BoundParams& p, ad::Var y, ad::Var eps_hat) {
    Var h = ad::add(t, ad::conv2d(t, y, p["aux.y.w"], p["aux.y.b"]),
                    ad::conv2d(t, eps_hat, p["aux.eps.w"], Var{}));
    h = ad::silu(t, h);
    return ad::conv2d(t, h, p["aux.c2.w"], p["aux.c2.b"]);
}

RegnetVars regnet_forward(ad::Tape& t, const NetConfig& cfg, const BoundParams& p, ad::Var x, ad::Var aux) {
    if (t.shape(x).channels != 1) throw ad::ShapeError("regnet: x must be single-channel");
    RegnetVars out;
    Var h = ad::silu(t, ad::conv2d(t, x, p["pred.c1.w"], p["pred.c1.b"]));
    out.feat_pred = ad::conv2d(t, h, p["pred.c2.w"], p["pred.c2.b"]);
    const Var features = aux.valid() ? aux : out.feat_pred;
    if (!(t.shape(features) == t.shape(out.feat_pred))) {
        throw ad::ShapeError("regnet: aux features " + t.shape(features).str() + " expected " +
                             t.shape(out.feat_pred).str());
    }
    const Var body = unet(t, cfg, p, ad::concat(t, x, features), Var{});
    out.v = ad::scale(t, ad::conv2d(t, body, p["vhead.w"], p["vhead.b"]), cfg.velocity_scale);
    out.v_inv = ad::scale(t, ad::conv2d(t, body, p["ihead.w"], p["ihead.b"]), cfg.velocity_scale);
    return out;
}

RegnetOutput regnet_forward(const NetConfig& cfg, const ModelParams& params, const Image2D& x) {
    ad::Tape t;
    const BoundParams p(t, params, false);
    const RegnetVars r = regnet_forward(t, cfg, p, t.constant(to_tensor(x)), Var{});
    return {field_from_tensor(t.value(r.v), x.height(), x.width()),
            field_from_tensor(t.value(r.v_inv), x.height(), x.width()), t.tensor(r.feat_pred)};
}

DeformationLoss total_deformation_loss(const Image2D& x, const Image2D& y, const Image2D& eps_hat,
                                       const NetConfig& cfg, const ModelParams& params,
                                       double lambda1, const ParzenConfig& parzen,
                                       int integration_steps, const ad::Tensor* align_target) {
    check_image_pair(x, y, "total_deformation_loss");
    check_image_pair(x, eps_hat, "total_deformation_loss");
    ad::Tape t;
    const BoundParams p(t, params, true);
    const Var xv = t.constant(to_tensor(x));
    const Var yv = t.constant(to_tensor(y));
    const Var aux = aux_encoder(t, cfg, p, yv, t.constant(to_tensor(eps_hat)));
    const RegnetVars r = regnet_forward(t, cfg, p, xv, aux);
    const Var target = align_target ? t.constant(*align_target) : aux;
    const ad::DeformationTerms terms = ad::deformation_objective(
        t, xv, yv, r.v, r.v_inv, r.feat_pred, target, lambda1, parzen, integration_steps);
    DeformationLoss out;
    out.data = t.scalar(terms.data);
    out.smooth = t.scalar(terms.smooth);
    out.align = t.scalar(terms.align);
    out.total = out.data + lambda1 * out.smooth + out.align;
    out.objective = t.scalar(terms.objective);
    t.backward(terms.objective);
    out.grads = t.parameter_grads();
    return out;
}

ad::Tensor aux_features(const NetConfig& cfg, const ModelParams& params, const Image2D& y,
                        const Image2D& eps_hat) {
    check_image_pair(y, eps_hat, "aux_features");
    ad::Tape t;
    const BoundParams p(t, params, false);
    const Var aux = aux_encoder(t, cfg, p, t.constant(to_tensor(y)), t.constant(to_tensor(eps_hat)));
    return ad::Tensor(t.shape(aux), t.value(aux));
}

void adam_step(ModelParams& params, const ParamMap& grads, AdamState& state, double lr,
               const AdamConfig& cfg) {
    for (const auto& [name, t] : params.tensors) {
        auto it = grads.find(name);
        if (it == grads.end()) throw std::invalid_argument("adam: no gradient for " + name);
        if (it->second.size() != t.data.size()) throw std::invalid_argument("adam: gradient size mismatch for " + name);
        for (double g : it->second) {
            if (!std::isfinite(g)) throw NonFiniteGradientError("adam: non-finite gradient in " + name);
        }
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (auto& [name, t] : params.tensors) {
        const std::vector<double>& g = grads.at(name);
        std::vector<double>& m = state.m[name];
        std::vector<double>& v = state.v[name];
        m.resize(g.size(), 0.0);
        v.resize(g.size(), 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            t.data[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
        }
    }
}

double warmup_lr(long step, double base_lr, long warmup_steps) {
    if (step < 0) throw std::invalid_argument("warmup_lr: negative step");
    if (warmup_steps <= 0) return base_lr;
    return base_lr * std::min(1.0, static_cast<double>(step) / static_cast<double>(warmup_steps));
}

GradCheckReport gradient_check(const LossClosure& f, const ModelParams& params, double tolerance,
                               double h_rel) {
    GradCheckReport report;
    report.tolerance = tolerance;
    const auto [loss0, analytic] = f(params);
    // Below this both gradients are indistinguishable from difference roundoff.
    const double floor = 100.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(loss0)) / h_rel;
    ModelParams probe = params;
    for (auto& [name, t] : probe.tensors) {
        const std::vector<double>& g = analytic.at(name);
        double diff = 0.0;
        double norm_g = 0.0;
        double norm_fd = 0.0;
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            const double theta = t.data[i];
            const double h = h_rel * std::max(1.0, std::abs(theta));
            t.data[i] = theta + h;
            const double fp = f(probe).first;
            t.data[i] = theta - h;
            const double fm = f(probe).first;
            t.data[i] = theta;
            const double fd = (fp - fm) / (2.0 * h);
            diff = std::max(diff, std::abs(fd - g[i]));
            norm_g = std::max(norm_g, std::abs(g[i]));
            norm_fd = std::max(norm_fd, std::abs(fd));
        }
        const double denom = std::max(norm_g, norm_fd);
        const double err = denom < floor ? 0.0 : diff / denom;
        report.entries.push_back({name, t.data.size(), err});
        report.worst = std::max(report.worst, err);
    }
    return report;
}

}  // namespace tracediff
