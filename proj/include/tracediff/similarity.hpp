#pragma once

// Parzen-window mutual information, the registration data term, feature
// alignment, and the histogram distances used for evaluation.

#include <stdexcept>
#include <vector>

#include "tracediff/autodiff.hpp"
#include "tracediff/grid.hpp"

namespace tracediff {

class DegenerateEntropyError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

struct ParzenConfig {
    int bins = 32;
    double window_sigma = 0.0;  // <= 0 means one bin width
    double lo = 0.0;
    double hi = 1.0;

    double bin_width() const { return (hi - lo) / (bins - 1); }
    double sigma() const { return window_sigma > 0.0 ? window_sigma : bin_width(); }
    double centre(int i) const { return lo + i * bin_width(); }
    void validate() const;
};

// Row-major rows x cols probabilities; a marginal has rows == 1.
struct Histogram {
    int rows = 1;
    int cols = 0;
    std::vector<double> p;

    double operator()(int i, int j) const { return p[static_cast<std::size_t>(i) * cols + j]; }
    double total() const;
};

// Per-pixel kernel weights (n_pixels x bins), each row normalised to 1.
std::vector<double> parzen_weights(std::span<const double> values, const ParzenConfig& cfg);

Histogram parzen_histogram(const Image2D& img, const ParzenConfig& cfg = {});
Histogram joint_parzen_histogram(const Image2D& a, const Image2D& b, const ParzenConfig& cfg = {});

// Marginals of a joint histogram: over rows (axis 0) or columns (axis 1).
Histogram marginal(const Histogram& joint, int axis);

double entropy(const Histogram& h);

struct MiResult {
    double value = 0.0;
    Image2D gradient;  // d value / d moving
};

// (H(fixed) + H(moving)) / H(fixed, moving).
MiResult mi_loss(const Image2D& fixed, const Image2D& moving, const ParzenConfig& cfg = {});

struct DataLossResult {
    double value = 0.0;
    VectorField2D grad_v;
    VectorField2D grad_v_inv;
};

// MI(x o C(v), y) + MI(x, y o C(v_inv)).
DataLossResult data_loss(const Image2D& x, const Image2D& y, const VectorField2D& v,
                         const VectorField2D& v_inv, const ParzenConfig& cfg = {},
                         int integration_steps = 7);

// Mean squared difference; only the first argument is treated as variable.
double feature_alignment_loss(const ad::Tensor& feat_pred, const ad::Tensor& feat_target);

double bhattacharyya_distance(const Histogram& p, const Histogram& q);

// Pooled intensities of each set fitted by a 1-D Gaussian:
// (mu_a - mu_b)^2 + (sigma_a - sigma_b)^2.
double simplified_frechet(const std::vector<Image2D>& a, const std::vector<Image2D>& b);

// Hard-binned histogram of all pooled intensities in [lo, hi].
Histogram intensity_histogram(const std::vector<Image2D>& images, int bins = 32, double lo = 0.0,
                              double hi = 1.0);

namespace ad {

// Differentiable in both arguments.
Var mutual_information(Tape& t, Var a, Var b, const ParzenConfig& cfg = {});

Var data_loss(Tape& t, Var x, Var y, Var v, Var v_inv, const ParzenConfig& cfg = {},
              int integration_steps = 7);

Var feature_alignment(Tape& t, Var feat_pred, Var feat_target);

struct DeformationTerms {
    Var data;
    Var smooth;  // smooth(v) + smooth(v_inv)
    Var align;
    Var objective;  // -data + lambda1 * smooth + align
};

DeformationTerms deformation_objective(Tape& t, Var x, Var y, Var v, Var v_inv, Var feat_pred,
                                       Var feat_target, double lambda1,
                                       const ParzenConfig& cfg = {}, int integration_steps = 7);

}  // namespace ad

}  // namespace tracediff
