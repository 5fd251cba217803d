#include "tracediff/diffusion.hpp"

#include <cmath>
#include <exception>
#include <stdexcept>

#include "tracediff/deformation.hpp"

namespace tracediff {

namespace {

void check_step(const NoiseSchedule& sched, int k, int min_k, const char* op) {
    if (k < min_k || k > sched.steps()) {
        throw std::out_of_range(std::string(op) + ": step " + std::to_string(k) + " outside [" +
                                std::to_string(min_k) + ", " + std::to_string(sched.steps()) + "]");
    }
}

void check_shape(const Image2D& a, const Image2D& b, const char* op) {
    if (!a.same_shape(b)) throw DimensionError(std::string(op) + ": image shapes differ");
}

}  // namespace

NoiseSchedule make_linear_schedule(int steps, double beta_start, double beta_end) {
    if (steps < 1) throw std::invalid_argument("schedule needs at least one step");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
        throw std::invalid_argument("schedule needs 0 < beta_start <= beta_end < 1");
    }
    NoiseSchedule s;
    s.alpha.assign(steps + 1, 1.0);
    s.gamma.assign(steps + 1, 1.0);
    for (int k = 1; k <= steps; ++k) {
        const double t = steps == 1 ? 0.0 : static_cast<double>(k - 1) / (steps - 1);
        const double beta = beta_start + (beta_end - beta_start) * t;
        s.alpha[k] = 1.0 - beta;
        s.gamma[k] = s.gamma[k - 1] * s.alpha[k];
    }
    return s;
}

NoiseSchedule NoiseSchedule::strided(int stride) const {
    if (stride < 1 || steps() % stride != 0) {
        throw std::invalid_argument("stride " + std::to_string(stride) + " must divide " +
                                    std::to_string(steps()) + " steps");
    }
    const int n = steps() / stride;
    NoiseSchedule s;
    s.alpha.assign(n + 1, 1.0);
    s.gamma.assign(n + 1, 1.0);
    for (int j = 1; j <= n; ++j) {
        s.gamma[j] = gamma[j * stride];
        s.alpha[j] = s.gamma[j] / s.gamma[j - 1];
    }
    return s;
}

Image2D forward_marginal(const Image2D& y0, int k, const Image2D& eps, const NoiseSchedule& sched) {
    check_step(sched, k, 0, "forward_marginal");
    check_shape(y0, eps, "forward_marginal");
    const double a = std::sqrt(sched.gamma[k]);
    const double b = std::sqrt(1.0 - sched.gamma[k]);
    Image2D out(y0.height(), y0.width());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] = static_cast<float>(a * y0.data()[i] + b * eps.data()[i]);
    }
    return out;
}

Image2D noise_source(const Image2D& x0, const NoiseSchedule& sched, Rng& rng) {
    const Image2D z = rng.normal_image(x0.height(), x0.width());
    return forward_marginal(x0, sched.steps(), z, sched);
}

PosteriorParams posterior_params(const Image2D& y0, const Image2D& yk, int k,
                                 const NoiseSchedule& sched) {
    check_step(sched, k, 1, "posterior_params");
    check_shape(y0, yk, "posterior_params");
    const double a = sched.alpha[k];
    const double g = sched.gamma[k];
    const double gp = sched.gamma[k - 1];
    const double c0 = std::sqrt(gp) * (1.0 - a) / (1.0 - g);
    const double ck = std::sqrt(a) * (1.0 - gp) / (1.0 - g);
    PosteriorParams p{Image2D(y0.height(), y0.width()), (1.0 - gp) * (1.0 - a) / (1.0 - g)};
    for (std::size_t i = 0; i < y0.size(); ++i) {
        p.mu.data()[i] = static_cast<float>(c0 * y0.data()[i] + ck * yk.data()[i]);
    }
    return p;
}

Image2D reverse_step(const Image2D& yk, const Image2D& eps_hat, int k, const NoiseSchedule& sched,
                     const Image2D& z, ReverseNoise noise) {
    check_step(sched, k, 1, "reverse_step");
    check_shape(yk, eps_hat, "reverse_step");
    check_shape(yk, z, "reverse_step");
    const double a = sched.alpha[k];
    const double g = sched.gamma[k];
    const double inv_sqrt_a = 1.0 / std::sqrt(a);
    const double eps_coef = (1.0 - a) / std::sqrt(1.0 - g);
    const double sigma = noise == ReverseNoise::Beta
                             ? std::sqrt(1.0 - a)
                             : std::sqrt((1.0 - sched.gamma[k - 1]) * (1.0 - a) / (1.0 - g));
    Image2D out(yk.height(), yk.width());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double y = yk.data()[i];
        out.data()[i] = static_cast<float>(inv_sqrt_a * (y - eps_coef * eps_hat.data()[i]) +
                                           sigma * z.data()[i]);
    }
    return out;
}

Image2D predict_clean(const Image2D& yk, const Image2D& eps_hat, int k, const NoiseSchedule& sched) {
    check_step(sched, k, 0, "predict_clean");
    check_shape(yk, eps_hat, "predict_clean");
    const double sg = std::sqrt(sched.gamma[k]);
    const double sn = std::sqrt(1.0 - sched.gamma[k]);
    Image2D out(yk.height(), yk.width());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] = static_cast<float>((yk.data()[i] - sn * eps_hat.data()[i]) / sg);
    }
    return out;
}

Image2D denoise_loop(const Image2D& x0, const Image2D& condition, const NoiseModel& model,
                     const NoiseSchedule& sched, Rng& rng, const SamplerConfig& cfg) {
    check_shape(x0, condition, "denoise_loop");
    if (cfg.n_samples < 1) throw std::invalid_argument("denoise_loop needs at least one sample");
    if (!model) throw std::invalid_argument("denoise_loop: no noise model");
    const std::uint64_t base = rng.next_u64();
    const int h = x0.height();
    const int w = x0.width();
    std::vector<Image2D> results(cfg.n_samples);

    std::vector<std::exception_ptr> errors(cfg.n_samples);

#pragma omp parallel for schedule(dynamic)
    for (int s = 0; s < cfg.n_samples; ++s) {
        try {
            Rng local(derive_seed(base, static_cast<std::uint64_t>(s)));
            Image2D y = noise_source(x0, sched, local);
            const Image2D zero(h, w);
            for (int k = sched.steps(); k >= 1; --k) {
                const Image2D eps_hat = model(condition, y, sched.gamma[k]);
                if (!eps_hat.same_shape(y)) throw DimensionError("noise model returned a wrong shape");
                const Image2D z = k > 1 ? local.normal_image(h, w) : zero;
                y = reverse_step(y, eps_hat, k, sched, z, cfg.noise);
            }
            results[s] = std::move(y);
        } catch (...) {
            errors[s] = std::current_exception();
        }
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    std::vector<double> acc(x0.size(), 0.0);
    for (const Image2D& r : results) {
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += r.data()[i];
    }
    Image2D out(h, w);
    for (std::size_t i = 0; i < acc.size(); ++i) {
        out.data()[i] = static_cast<float>(acc[i] / cfg.n_samples);
    }
    return out;
}

NoiseLoss training_loss_in(const Image2D& y0, const Image2D& ys, const DifferentiableNoiseModel& model,
                           const NoiseSchedule& sched, Rng& rng) {
    check_shape(y0, ys, "training_loss_in");
    NoiseLoss result;
    result.k = rng.uniform_int(1, sched.steps());
    const Image2D eps = rng.normal_image(y0.height(), y0.width());
    const double g = sched.gamma[result.k];
    const double a = std::sqrt(g);
    const double b = std::sqrt(1.0 - g);

    ad::Tensor noisy({1, y0.height(), y0.width()});
    for (std::size_t i = 0; i < y0.size(); ++i) noisy.data[i] = a * y0.data()[i] + b * eps.data()[i];

    ad::Tape tape;
    const ad::Var cond = tape.constant(to_tensor(ys));
    const ad::Var noisy_v = tape.constant(noisy);
    const ad::Var target = tape.constant(to_tensor(eps));
    const ad::Var eps_hat = model(tape, cond, noisy_v, g);
    const ad::Var loss = ad::mean_abs_diff(tape, eps_hat, target);
    result.loss = tape.scalar(loss);
    if (tape.requires_grad(loss)) {
        tape.backward(loss);
        result.grads = tape.parameter_grads();
    }
    return result;
}

}  // namespace tracediff
