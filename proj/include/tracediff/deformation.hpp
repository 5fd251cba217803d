#pragma once

// Stationary-velocity-field diffeomorphisms.
//
// A DeformationField stores the displacement u of phi(p) = p + u(p).
// integrate() exponentiates a velocity field by scaling and squaring:
//   u_0 = v / 2^T,   u <- u + u o (Id + u)   (T times).
// The same arithmetic is available on the autodiff tape so trained and
// deployed fields agree exactly.

#include <stdexcept>

#include "tracediff/autodiff.hpp"
#include "tracediff/grid.hpp"

namespace tracediff {

class NonFiniteError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct DeformationField {
    VectorField2D disp;

    static DeformationField identity(int height, int width) { return {VectorField2D(height, width)}; }

    int height() const { return disp.height(); }
    int width() const { return disp.width(); }

    // phi(p) = p + u(p), with u sampled bilinearly.
    Point map(Point p) const;

    bool operator==(const DeformationField&) const = default;
};

struct IntegrationConfig {
    int steps = 7;
};

DeformationField integrate(const VectorField2D& velocity, const IntegrationConfig& cfg = {});

// C(-v).
DeformationField inverse(const VectorField2D& velocity, const IntegrationConfig& cfg = {});

// (a o b)(p) = a(b(p)), realised as u_b(p) + u_a(p + u_b(p)).
DeformationField compose(const DeformationField& a, const DeformationField& b);

Image2D warp(const Image2D& img, const DeformationField& phi);

// Per-pixel determinant of the forward-difference Jacobian of p -> p + u(p).
Image2D jacobian_determinant(const DeformationField& phi);

// Fraction of interior pixels (excluding a one-pixel rim) with det > 0.
double positive_jacobian_fraction(const DeformationField& phi);

struct ResidualStats {
    double mean = 0.0;
    double max = 0.0;
};

// Displacement magnitude of compose(a, b) - Id.
ResidualStats composition_residual(const DeformationField& a, const DeformationField& b);

struct SmoothnessResult {
    double value = 0.0;
    VectorField2D gradient;
};

// Mean over pixels and channels of squared forward differences (both
// directions summed per pixel), with its gradient with respect to v.
SmoothnessResult smoothness_loss(const VectorField2D& v);

// Conversions between fields and (2, H, W) tape tensors.
ad::Tensor to_tensor(const VectorField2D& field);
ad::Tensor to_tensor(const Image2D& img);
VectorField2D field_from_tensor(const std::vector<double>& data, int height, int width);
Image2D image_from_tensor(const std::vector<double>& data, int height, int width);

namespace ad {

Var integrate(Tape& t, Var velocity, int steps);
Var smoothness(Tape& t, Var velocity);

}  // namespace ad

}  // namespace tracediff
