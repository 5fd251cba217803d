#include "tracediff/deformation.hpp"

#include <cmath>
#include <string>

#include "tracediff/kernels.hpp"

namespace tracediff {

namespace {

std::vector<double> planes(const VectorField2D& f) {
    std::vector<double> out;
    out.reserve(2 * static_cast<std::size_t>(f.height()) * f.width());
    for (float v : f.ux().data()) out.push_back(v);
    for (float v : f.uy().data()) out.push_back(v);
    return out;
}

// One squaring step on double planes: u <- u + u o (Id + u).
void square_in_place(std::vector<double>& u, int h, int w) {
    std::vector<double> sampled(u.size());
    kernels::resample(u, 2, h, w, u, sampled);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] += sampled[i];
}

}  // namespace

Point DeformationField::map(Point p) const {
    return {p.x + bilinear_sample(disp.ux(), p), p.y + bilinear_sample(disp.uy(), p)};
}

ad::Tensor to_tensor(const VectorField2D& field) {
    return ad::Tensor({2, field.height(), field.width()}, planes(field));
}

ad::Tensor to_tensor(const Image2D& img) {
    return ad::Tensor({1, img.height(), img.width()},
                      std::vector<double>(img.data().begin(), img.data().end()));
}

VectorField2D field_from_tensor(const std::vector<double>& data, int height, int width) {
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    if (data.size() != 2 * plane) throw DimensionError("field_from_tensor: size mismatch");
    VectorField2D f(height, width);
    for (std::size_t i = 0; i < plane; ++i) {
        f.ux().data()[i] = static_cast<float>(data[i]);
        f.uy().data()[i] = static_cast<float>(data[plane + i]);
    }
    return f;
}

Image2D image_from_tensor(const std::vector<double>& data, int height, int width) {
    if (data.size() != static_cast<std::size_t>(height) * width) {
        throw DimensionError("image_from_tensor: size mismatch");
    }
    return Image2D(height, width, std::vector<float>(data.begin(), data.end()));
}

DeformationField integrate(const VectorField2D& velocity, const IntegrationConfig& cfg) {
    if (cfg.steps < 1) throw std::invalid_argument("integration needs at least one squaring step");
    if (!all_finite(velocity)) throw NonFiniteError("integrate: velocity field has non-finite values");
    const int h = velocity.height();
    const int w = velocity.width();
    std::vector<double> u = planes(velocity);
    const double s = std::ldexp(1.0, -cfg.steps);
    for (double& x : u) x *= s;
    for (int step = 0; step < cfg.steps; ++step) square_in_place(u, h, w);
    return {field_from_tensor(u, h, w)};
}

DeformationField inverse(const VectorField2D& velocity, const IntegrationConfig& cfg) {
    VectorField2D neg = velocity;
    for (float& v : neg.ux().data()) v = -v;
    for (float& v : neg.uy().data()) v = -v;
    return integrate(neg, cfg);
}

DeformationField compose(const DeformationField& a, const DeformationField& b) {
    if (!a.disp.same_shape(b.disp)) throw DimensionError("compose: field shapes differ");
    const int h = a.height();
    const int w = a.width();
    const std::vector<double> ua = planes(a.disp);
    std::vector<double> ub = planes(b.disp);
    std::vector<double> sampled(ua.size());
    kernels::resample(ua, 2, h, w, ub, sampled);
    for (std::size_t i = 0; i < ub.size(); ++i) ub[i] += sampled[i];
    return {field_from_tensor(ub, h, w)};
}

Image2D warp(const Image2D& img, const DeformationField& phi) { return warp(img, phi.disp); }

Image2D jacobian_determinant(const DeformationField& phi) {
    const VectorField2D gx = spatial_gradient(phi.disp.ux());
    const VectorField2D gy = spatial_gradient(phi.disp.uy());
    Image2D det(phi.height(), phi.width());
    for (std::size_t i = 0; i < det.size(); ++i) {
        const double a = 1.0 + gx.ux().data()[i];
        const double b = gx.uy().data()[i];
        const double c = gy.ux().data()[i];
        const double d = 1.0 + gy.uy().data()[i];
        det.data()[i] = static_cast<float>(a * d - b * c);
    }
    return det;
}

double positive_jacobian_fraction(const DeformationField& phi) {
    const Image2D det = jacobian_determinant(phi);
    std::size_t total = 0;
    std::size_t positive = 0;
    for (int r = 1; r + 1 < det.height(); ++r) {
        for (int c = 1; c + 1 < det.width(); ++c) {
            ++total;
            if (det(r, c) > 0.0f) ++positive;
        }
    }
    return total == 0 ? 1.0 : static_cast<double>(positive) / static_cast<double>(total);
}

ResidualStats composition_residual(const DeformationField& a, const DeformationField& b) {
    const DeformationField c = compose(a, b);
    ResidualStats s;
    const std::size_t n = c.disp.ux().size();
    for (std::size_t i = 0; i < n; ++i) {
        const double m = std::hypot(c.disp.ux().data()[i], c.disp.uy().data()[i]);
        s.mean += m;
        s.max = std::max(s.max, m);
    }
    s.mean /= static_cast<double>(n);
    return s;
}

namespace {

// Shared by the plain and tape versions.
double smoothness_value(const std::vector<double>& v, int channels, int h, int w,
                        std::vector<double>* grad, double upstream) {
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const double n = static_cast<double>(channels) * plane;
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
        const double* f = v.data() + c * plane;
        double* g = grad ? grad->data() + c * plane : nullptr;
        for (int r = 0; r < h; ++r) {
            for (int q = 0; q < w; ++q) {
                const std::size_t i = static_cast<std::size_t>(r) * w + q;
                if (q + 1 < w) {
                    const double d = f[i + 1] - f[i];
                    acc += d * d;
                    if (g) {
                        g[i + 1] += upstream * 2.0 * d / n;
                        g[i] -= upstream * 2.0 * d / n;
                    }
                }
                if (r + 1 < h) {
                    const double d = f[i + w] - f[i];
                    acc += d * d;
                    if (g) {
                        g[i + w] += upstream * 2.0 * d / n;
                        g[i] -= upstream * 2.0 * d / n;
                    }
                }
            }
        }
    }
    return acc / n;
}

}  // namespace

SmoothnessResult smoothness_loss(const VectorField2D& v) {
    const int h = v.height();
    const int w = v.width();
    const std::vector<double> data = planes(v);
    std::vector<double> grad(data.size(), 0.0);
    SmoothnessResult r;
    r.value = smoothness_value(data, 2, h, w, &grad, 1.0);
    r.gradient = field_from_tensor(grad, h, w);
    return r;
}

namespace ad {

Var integrate(Tape& t, Var velocity, int steps) {
    if (steps < 1) throw std::invalid_argument("integration needs at least one squaring step");
    Var u = scale(t, velocity, std::ldexp(1.0, -steps));
    for (int i = 0; i < steps; ++i) u = add(t, u, resample(t, u, u));
    return u;
}

Var smoothness(Tape& t, Var velocity) {
    const Shape s = t.shape(velocity);
    const double value = smoothness_value(t.value(velocity), s.channels, s.height, s.width, nullptr, 0.0);
    return t.push({1, 1, 1}, {value}, {velocity}, [velocity, s](Tape& tp, int self) {
        smoothness_value(tp.value(velocity), s.channels, s.height, s.width, &tp.grad(velocity),
                         tp.grad(self)[0]);
    });
}

}  // namespace ad

}  // namespace tracediff
