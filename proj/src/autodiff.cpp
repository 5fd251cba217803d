#include "tracediff/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "tracediff/kernels.hpp"

namespace tracediff::ad {

std::string Shape::str() const {
    return "(" + std::to_string(channels) + "," + std::to_string(height) + "," +
           std::to_string(width) + ")";
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(s), data(std::move(values)) {
    if (data.size() != shape.size()) {
        throw ShapeError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape.str());
    }
}

Var Tape::constant(Shape shape, std::vector<double> value) {
    if (value.size() != shape.size()) throw ShapeError("constant: size mismatch " + shape.str());
    nodes_.push_back({shape, std::move(value), {}, false, {}});
    return {static_cast<int>(nodes_.size()) - 1};
}

Var Tape::variable(Shape shape, std::vector<double> value) {
    if (value.size() != shape.size()) throw ShapeError("variable: size mismatch " + shape.str());
    nodes_.push_back({shape, std::move(value), {}, true, {}});
    return {static_cast<int>(nodes_.size()) - 1};
}

Var Tape::parameter(const std::string& name, const Tensor& t) {
    if (params_.count(name)) throw std::invalid_argument("parameter bound twice: " + name);
    Var v = variable(t.shape, t.data);
    params_[name] = v;
    return v;
}

std::vector<double>& Tape::grad(int id) {
    Node& n = nodes_.at(id);
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return n.grad;
}

double Tape::scalar(Var v) const {
    const auto& val = value(v);
    if (val.size() != 1) throw ShapeError("scalar() on tensor of shape " + shape(v).str());
    return val[0];
}

Var Tape::push(Shape shape, std::vector<double> value, std::initializer_list<Var> inputs,
               Backward backward) {
    bool needs = false;
    for (Var in : inputs) {
        if (in.valid() && nodes_.at(in.id).requires_grad) needs = true;
    }
    nodes_.push_back({shape, std::move(value), {}, needs, needs ? std::move(backward) : Backward{}});
    return {static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var out) {
    if (shape(out).size() != 1) throw ShapeError("backward() needs a single-element output");
    for (auto& n : nodes_) n.grad.clear();
    grad(out)[0] = 1.0;
    for (int id = out.id; id >= 0; --id) {
        Node& n = nodes_[id];
        if (n.backward && !n.grad.empty()) n.backward(*this, id);
    }
}

std::map<std::string, std::vector<double>> Tape::parameter_grads() {
    std::map<std::string, std::vector<double>> out;
    for (const auto& [name, v] : params_) out[name] = grad(v);
    return out;
}

namespace {

void require_same(const Tape& t, Var a, Var b, const char* op) {
    if (!(t.shape(a) == t.shape(b))) {
        throw ShapeError(std::string(op) + ": shapes " + t.shape(a).str() + " and " +
                         t.shape(b).str() + " differ");
    }
}

}  // namespace

Var add(Tape& t, Var a, Var b) {
    require_same(t, a, b, "add");
    std::vector<double> out(t.value(a));
    const auto& bv = t.value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return t.push(t.shape(a), std::move(out), {a, b}, [a, b](Tape& tp, int self) {
        const auto g = tp.grad(self);
        if (tp.requires_grad(a)) {
            auto& ga = tp.grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (tp.requires_grad(b)) {
            auto& gb = tp.grad(b);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
    });
}

Var sub(Tape& t, Var a, Var b) {
    require_same(t, a, b, "sub");
    std::vector<double> out(t.value(a));
    const auto& bv = t.value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return t.push(t.shape(a), std::move(out), {a, b}, [a, b](Tape& tp, int self) {
        const auto g = tp.grad(self);
        if (tp.requires_grad(a)) {
            auto& ga = tp.grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (tp.requires_grad(b)) {
            auto& gb = tp.grad(b);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

Var mul(Tape& t, Var a, Var b) {
    require_same(t, a, b, "mul");
    std::vector<double> out(t.value(a));
    const auto& bv = t.value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return t.push(t.shape(a), std::move(out), {a, b}, [a, b](Tape& tp, int self) {
        const auto g = tp.grad(self);
        if (tp.requires_grad(a)) {
            const auto& bv = tp.value(b);
            auto& ga = tp.grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (tp.requires_grad(b)) {
            const auto& av = tp.value(a);
            auto& gb = tp.grad(b);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

Var scale(Tape& t, Var a, double s) {
    std::vector<double> out(t.value(a));
    for (double& v : out) v *= s;
    return t.push(t.shape(a), std::move(out), {a}, [a, s](Tape& tp, int self) {
        const auto& g = tp.grad(self);
        auto& ga = tp.grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
    });
}

Var add_scalar(Tape& t, Var a, double s) {
    std::vector<double> out(t.value(a));
    for (double& v : out) v += s;
    return t.push(t.shape(a), std::move(out), {a}, [a](Tape& tp, int self) {
        const auto& g = tp.grad(self);
        auto& ga = tp.grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

Var mul_scalar(Tape& t, Var a, Var s) {
    if (t.shape(s).size() != 1) throw ShapeError("mul_scalar: factor must have one element");
    const double sv = t.value(s)[0];
    std::vector<double> out(t.value(a));
    for (double& v : out) v *= sv;
    return t.push(t.shape(a), std::move(out), {a, s}, [a, s](Tape& tp, int self) {
        const auto& g = tp.grad(self);
        const double sv = tp.value(s)[0];
        if (tp.requires_grad(a)) {
            auto& ga = tp.grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += sv * g[i];
        }
        if (tp.requires_grad(s)) {
            const auto& av = tp.value(a);
            double acc = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * av[i];
            tp.grad(s)[0] += acc;
        }
    });
}

Var exp(Tape& t, Var a) {
    std::vector<double> out(t.value(a));
    for (double& v : out) v = std::exp(v);
    return t.push(t.shape(a), std::move(out), {a}, [a](Tape& tp, int self) {
        const auto& g = tp.grad(self);
        const auto& y = tp.value(Var{self});
        auto& ga = tp.grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    });
}

Var silu(Tape& t, Var a) {
    std::vector<double> out(t.value(a));
    for (double& v : out) v = v / (1.0 + std::exp(-v));
    return t.push(t.shape(a), std::move(out), {a}, [a](Tape& tp, int self) {
        const auto& g = tp.grad(self);
        const auto& x = tp.value(a);
        auto& ga = tp.grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double s = 1.0 / (1.0 + std::exp(-x[i]));
            ga[i] += g[i] * s * (1.0 + x[i] * (1.0 - s));
        }
    });
}

Var stop_gradient(Tape& t, Var a) { return t.constant(t.shape(a), t.value(a)); }

Var sum(Tape& t, Var a) {
    double acc = 0.0;
    for (double v : t.value(a)) acc += v;
    return t.push({1, 1, 1}, {acc}, {a}, [a](Tape& tp, int self) {
        const double g = tp.grad(self)[0];
        for (double& ga : tp.grad(a)) ga += g;
    });
}

Var mean(Tape& t, Var a) {
    const double n = static_cast<double>(t.shape(a).size());
    return scale(t, sum(t, a), 1.0 / n);
}

Var mean_abs_diff(Tape& t, Var a, Var b) {
    require_same(t, a, b, "mean_abs_diff");
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    double acc = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) acc += std::abs(av[i] - bv[i]);
    const double n = static_cast<double>(av.size());
    return t.push({1, 1, 1}, {acc / n}, {a, b}, [a, b, n](Tape& tp, int self) {
        const double g = tp.grad(self)[0] / n;
        const auto& av = tp.value(a);
        const auto& bv = tp.value(b);
        const bool ga_on = tp.requires_grad(a);
        const bool gb_on = tp.requires_grad(b);
        for (std::size_t i = 0; i < av.size(); ++i) {
            const double d = av[i] - bv[i];
            const double s = d > 0.0 ? g : (d < 0.0 ? -g : 0.0);
            if (ga_on) tp.grad(a)[i] += s;
            if (gb_on) tp.grad(b)[i] -= s;
        }
    });
}

Var mean_square_diff(Tape& t, Var a, Var b) {
    require_same(t, a, b, "mean_square_diff");
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    double acc = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) acc += (av[i] - bv[i]) * (av[i] - bv[i]);
    const double n = static_cast<double>(av.size());
    return t.push({1, 1, 1}, {acc / n}, {a, b}, [a, b, n](Tape& tp, int self) {
        const double g = tp.grad(self)[0] * 2.0 / n;
        const auto& av = tp.value(a);
        const auto& bv = tp.value(b);
        const bool ga_on = tp.requires_grad(a);
        const bool gb_on = tp.requires_grad(b);
        for (std::size_t i = 0; i < av.size(); ++i) {
            const double d = g * (av[i] - bv[i]);
            if (ga_on) tp.grad(a)[i] += d;
            if (gb_on) tp.grad(b)[i] -= d;
        }
    });
}

Var bce_with_logits(Tape& t, Var logits, Var targets) {
    require_same(t, logits, targets, "bce_with_logits");
    const auto& z = t.value(logits);
    const auto& y = t.value(targets);
    const double n = static_cast<double>(z.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        acc += std::max(z[i], 0.0) - z[i] * y[i] + std::log1p(std::exp(-std::abs(z[i])));
    }
    return t.push({1, 1, 1}, {acc / n}, {logits}, [logits, targets, n](Tape& tp, int self) {
        const double g = tp.grad(self)[0] / n;
        const auto& z = tp.value(logits);
        const auto& y = tp.value(targets);
        auto& gz = tp.grad(logits);
        for (std::size_t i = 0; i < z.size(); ++i) gz[i] += g * (1.0 / (1.0 + std::exp(-z[i])) - y[i]);
    });
}

Var concat(Tape& t, Var a, Var b) {
    const Shape sa = t.shape(a);
    const Shape sb = t.shape(b);
    if (sa.height != sb.height || sa.width != sb.width) {
        throw ShapeError("concat: spatial shapes " + sa.str() + " and " + sb.str() + " differ");
    }
    std::vector<double> out(t.value(a));
    out.insert(out.end(), t.value(b).begin(), t.value(b).end());
    const std::size_t na = sa.size();
    return t.push({sa.channels + sb.channels, sa.height, sa.width}, std::move(out), {a, b},
                  [a, b, na](Tape& tp, int self) {
                      const auto& g = tp.grad(self);
                      if (tp.requires_grad(a)) {
                          auto& ga = tp.grad(a);
                          for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
                      }
                      if (tp.requires_grad(b)) {
                          auto& gb = tp.grad(b);
                          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
                      }
                  });
}

Var slice_channels(Tape& t, Var a, int first, int count) {
    const Shape s = t.shape(a);
    if (first < 0 || count < 1 || first + count > s.channels) {
        throw ShapeError("slice_channels out of range for " + s.str());
    }
    const std::size_t offset = static_cast<std::size_t>(first) * s.plane();
    const std::size_t n = static_cast<std::size_t>(count) * s.plane();
    std::vector<double> out(t.value(a).begin() + offset, t.value(a).begin() + offset + n);
    return t.push({count, s.height, s.width}, std::move(out), {a}, [a, offset](Tape& tp, int self) {
        const auto& g = tp.grad(self);
        auto& ga = tp.grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[offset + i] += g[i];
    });
}

Var avg_pool2(Tape& t, Var a) {
    const Shape s = t.shape(a);
    if (s.height % 2 || s.width % 2) throw ShapeError("avg_pool2 needs even dimensions: " + s.str());
    const Shape o{s.channels, s.height / 2, s.width / 2};
    std::vector<double> out(o.size());
    const auto& x = t.value(a);
    for (int c = 0; c < s.channels; ++c) {
        for (int r = 0; r < o.height; ++r) {
            for (int q = 0; q < o.width; ++q) {
                const std::size_t base = c * s.plane() + 2 * r * s.width + 2 * q;
                out[c * o.plane() + r * o.width + q] =
                    0.25 * (x[base] + x[base + 1] + x[base + s.width] + x[base + s.width + 1]);
            }
        }
    }
    return t.push(o, std::move(out), {a}, [a, s, o](Tape& tp, int self) {
        const auto& g = tp.grad(self);
        auto& ga = tp.grad(a);
        for (int c = 0; c < s.channels; ++c) {
            for (int r = 0; r < o.height; ++r) {
                for (int q = 0; q < o.width; ++q) {
                    const double v = 0.25 * g[c * o.plane() + r * o.width + q];
                    const std::size_t base = c * s.plane() + 2 * r * s.width + 2 * q;
                    ga[base] += v;
                    ga[base + 1] += v;
                    ga[base + s.width] += v;
                    ga[base + s.width + 1] += v;
                }
            }
        }
    });
}

Var upsample2(Tape& t, Var a) {
    const Shape s = t.shape(a);
    const Shape o{s.channels, s.height * 2, s.width * 2};
    std::vector<double> out(o.size());
    const auto& x = t.value(a);
    for (int c = 0; c < o.channels; ++c) {
        for (int r = 0; r < o.height; ++r) {
            for (int q = 0; q < o.width; ++q) {
                out[c * o.plane() + r * o.width + q] = x[c * s.plane() + (r / 2) * s.width + q / 2];
            }
        }
    }
    return t.push(o, std::move(out), {a}, [a, s, o](Tape& tp, int self) {
        const auto& g = tp.grad(self);
        auto& ga = tp.grad(a);
        for (int c = 0; c < o.channels; ++c) {
            for (int r = 0; r < o.height; ++r) {
                for (int q = 0; q < o.width; ++q) {
                    ga[c * s.plane() + (r / 2) * s.width + q / 2] += g[c * o.plane() + r * o.width + q];
                }
            }
        }
    });
}

Var conv2d(Tape& t, Var x, Var weight, Var bias) {
    const Shape sx = t.shape(x);
    const Shape sw = t.shape(weight);
    const int kk = sw.width;
    const int ksize = kk == 9 ? 3 : (kk == 1 ? 1 : 0);
    if (ksize == 0 || sw.height != sx.channels) {
        throw ShapeError("conv2d: weight " + sw.str() + " incompatible with input " + sx.str());
    }
    if (bias.valid() && t.shape(bias).size() != static_cast<std::size_t>(sw.channels)) {
        throw ShapeError("conv2d: bias size mismatch");
    }
    const Shape o{sw.channels, sx.height, sx.width};
    std::vector<double> out(o.size());
    const std::vector<double> empty;
    kernels::conv2d_forward(t.value(x), sx.channels, sx.height, sx.width, t.value(weight),
                            bias.valid() ? t.value(bias) : empty, o.channels, ksize, out);
    return t.push(o, std::move(out), {x, weight, bias}, [x, weight, bias, sx, o, ksize](Tape& tp, int self) {
        std::span<double> gin, gw, gb;
        if (tp.requires_grad(x)) gin = tp.grad(x);
        if (tp.requires_grad(weight)) gw = tp.grad(weight);
        if (bias.valid() && tp.requires_grad(bias)) gb = tp.grad(bias);
        kernels::conv2d_backward(tp.value(x), sx.channels, sx.height, sx.width, tp.value(weight),
                                 o.channels, ksize, tp.grad(self), gin, gw, gb);
    });
}

Var group_norm(Tape& t, Var x, int groups, Var gamma, Var beta, double eps) {
    const Shape s = t.shape(x);
    if (groups < 1 || s.channels % groups) {
        throw ShapeError("group_norm: " + std::to_string(groups) + " groups do not divide " + s.str());
    }
    if (t.shape(gamma).size() != static_cast<std::size_t>(s.channels) ||
        t.shape(beta).size() != static_cast<std::size_t>(s.channels)) {
        throw ShapeError("group_norm: affine parameter size mismatch");
    }
    const int cpg = s.channels / groups;
    const std::size_t m = cpg * s.plane();
    const auto& xv = t.value(x);
    const auto& gv = t.value(gamma);
    const auto& bv = t.value(beta);
    std::vector<double> xhat(s.size());
    std::vector<double> inv_std(groups);
    std::vector<double> out(s.size());
    for (int g = 0; g < groups; ++g) {
        const std::size_t base = g * m;
        double mu = 0.0;
        for (std::size_t i = 0; i < m; ++i) mu += xv[base + i];
        mu /= static_cast<double>(m);
        double var = 0.0;
        for (std::size_t i = 0; i < m; ++i) var += (xv[base + i] - mu) * (xv[base + i] - mu);
        var /= static_cast<double>(m);
        inv_std[g] = 1.0 / std::sqrt(var + eps);
        for (std::size_t i = 0; i < m; ++i) xhat[base + i] = (xv[base + i] - mu) * inv_std[g];
    }
    for (int c = 0; c < s.channels; ++c) {
        for (std::size_t i = 0; i < s.plane(); ++i) {
            const std::size_t idx = c * s.plane() + i;
            out[idx] = gv[c] * xhat[idx] + bv[c];
        }
    }
    return t.push(s, std::move(out), {x, gamma, beta},
                  [x, gamma, beta, s, groups, cpg, m, xhat = std::move(xhat),
                   inv_std = std::move(inv_std)](Tape& tp, int self) {
                      const auto& g = tp.grad(self);
                      const auto& gv = tp.value(gamma);
                      if (tp.requires_grad(gamma) || tp.requires_grad(beta)) {
                          for (int c = 0; c < s.channels; ++c) {
                              double dg = 0.0;
                              double db = 0.0;
                              for (std::size_t i = 0; i < s.plane(); ++i) {
                                  const std::size_t idx = c * s.plane() + i;
                                  dg += g[idx] * xhat[idx];
                                  db += g[idx];
                              }
                              if (tp.requires_grad(gamma)) tp.grad(gamma)[c] += dg;
                              if (tp.requires_grad(beta)) tp.grad(beta)[c] += db;
                          }
                      }
                      if (!tp.requires_grad(x)) return;
                      auto& gx = tp.grad(x);
                      for (int gr = 0; gr < groups; ++gr) {
                          const std::size_t base = gr * m;
                          double mean_d = 0.0;
                          double mean_dx = 0.0;
                          for (std::size_t i = 0; i < m; ++i) {
                              const int c = gr * cpg + static_cast<int>(i / s.plane());
                              const double d = g[base + i] * gv[c];
                              mean_d += d;
                              mean_dx += d * xhat[base + i];
                          }
                          mean_d /= static_cast<double>(m);
                          mean_dx /= static_cast<double>(m);
                          for (std::size_t i = 0; i < m; ++i) {
                              const int c = gr * cpg + static_cast<int>(i / s.plane());
                              const double d = g[base + i] * gv[c];
                              gx[base + i] += inv_std[gr] * (d - mean_d - xhat[base + i] * mean_dx);
                          }
                      }
                  });
}

Var add_channel_bias(Tape& t, Var x, Var bias) {
    const Shape s = t.shape(x);
    if (t.shape(bias).size() != static_cast<std::size_t>(s.channels)) {
        throw ShapeError("add_channel_bias: bias size mismatch for " + s.str());
    }
    std::vector<double> out(t.value(x));
    const auto& b = t.value(bias);
    for (int c = 0; c < s.channels; ++c) {
        for (std::size_t i = 0; i < s.plane(); ++i) out[c * s.plane() + i] += b[c];
    }
    return t.push(s, std::move(out), {x, bias}, [x, bias, s](Tape& tp, int self) {
        const auto& g = tp.grad(self);
        if (tp.requires_grad(x)) {
            auto& gx = tp.grad(x);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (tp.requires_grad(bias)) {
            auto& gb = tp.grad(bias);
            for (int c = 0; c < s.channels; ++c) {
                double acc = 0.0;
                for (std::size_t i = 0; i < s.plane(); ++i) acc += g[c * s.plane() + i];
                gb[c] += acc;
            }
        }
    });
}

Var linear(Tape& t, Var x, Var weight, Var bias) {
    const std::size_t n = t.shape(x).size();
    const Shape sw = t.shape(weight);
    const std::size_t m = static_cast<std::size_t>(sw.channels);
    if (static_cast<std::size_t>(sw.height) * sw.width != n) {
        throw ShapeError("linear: weight " + sw.str() + " incompatible with input size " + std::to_string(n));
    }
    if (bias.valid() && t.shape(bias).size() != m) throw ShapeError("linear: bias size mismatch");
    const auto& xv = t.value(x);
    const auto& wv = t.value(weight);
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        double acc = bias.valid() ? t.value(bias)[i] : 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += wv[i * n + j] * xv[j];
        out[i] = acc;
    }
    return t.push({static_cast<int>(m), 1, 1}, std::move(out), {x, weight, bias},
                  [x, weight, bias, n, m](Tape& tp, int self) {
                      const auto& g = tp.grad(self);
                      const auto& xv = tp.value(x);
                      const auto& wv = tp.value(weight);
                      if (tp.requires_grad(weight)) {
                          auto& gw = tp.grad(weight);
                          for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t j = 0; j < n; ++j) gw[i * n + j] += g[i] * xv[j];
                      }
                      if (bias.valid() && tp.requires_grad(bias)) {
                          auto& gb = tp.grad(bias);
                          for (std::size_t i = 0; i < m; ++i) gb[i] += g[i];
                      }
                      if (tp.requires_grad(x)) {
                          auto& gx = tp.grad(x);
                          for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t j = 0; j < n; ++j) gx[j] += g[i] * wv[i * n + j];
                      }
                  });
}

Var resample(Tape& t, Var src, Var disp) {
    const Shape ss = t.shape(src);
    const Shape sd = t.shape(disp);
    if (sd.channels != 2 || sd.height != ss.height || sd.width != ss.width) {
        throw ShapeError("resample: displacement " + sd.str() + " incompatible with " + ss.str());
    }
    std::vector<double> out(ss.size());
    kernels::resample(t.value(src), ss.channels, ss.height, ss.width, t.value(disp), out);
    return t.push(ss, std::move(out), {src, disp}, [src, disp, ss](Tape& tp, int self) {
        std::span<double> gs, gd;
        if (tp.requires_grad(src)) gs = tp.grad(src);
        if (tp.requires_grad(disp)) gd = tp.grad(disp);
        kernels::resample_backward(tp.value(src), ss.channels, ss.height, ss.width, tp.value(disp),
                                   tp.grad(self), gs, gd);
    });
}

}  // namespace tracediff::ad
