#include "affina/estimator.hpp"

#include <cmath>
#include <stdexcept>

namespace affina {

DerivedKernelSizes derived_half_sizes(const TransformDistribution& d, const PolarGrid& g) {
    d.validate();
    DerivedKernelSizes s;
    s.cart_rows = int(std::lround(d.n_max));
    s.cart_cols = int(std::lround(d.m_max));
    const AffineParams scale_only{0.0, d.s_max, 0.0, 0.0};
    const AffineParams rotate_only{d.theta_max, 1.0, 0.0, 0.0};
    s.polar_rows = int(std::lround(std::abs(polar_shift_of(scale_only, g).radial_rows)));
    s.polar_cols = int(std::lround(std::abs(polar_shift_of(rotate_only, g).angular_cols)));
    return s;
}

EstimatorConfig EstimatorConfig::identity() {
    EstimatorConfig cfg;
    cfg.mode = EstimatorMode::identity;
    return cfg;
}

EstimatorConfig EstimatorConfig::ti(Kernel cartesian) {
    EstimatorConfig cfg;
    cfg.mode = EstimatorMode::ti;
    cartesian.validate();
    cfg.cartesian_kernel = std::move(cartesian);
    return cfg;
}

EstimatorConfig EstimatorConfig::ai(Kernel cartesian, Kernel polar, PolarGrid grid) {
    EstimatorConfig cfg;
    cfg.mode = EstimatorMode::ai;
    cartesian.validate();
    polar.validate();
    grid.validate();
    cfg.cartesian_kernel = std::move(cartesian);
    cfg.polar_kernel = std::move(polar);
    cfg.polar_grid = grid;
    return cfg;
}

EstimatorConfig EstimatorConfig::for_distribution(const TransformDistribution& d, int height,
                                                  int width, KernelKind kind) {
    const PolarGrid grid = PolarGrid::for_image(height, width);
    const DerivedKernelSizes s = derived_half_sizes(d, grid);
    return ai(make_kernel(kind, s.cart_rows, s.cart_cols),
              make_kernel(kind, s.polar_rows, s.polar_cols), grid);
}

ImageTensor estimate(const ImageTensor& grad, const EstimatorConfig& cfg) {
    switch (cfg.mode) {
        case EstimatorMode::identity:
            return grad;
        case EstimatorMode::ti:
            return convolve2d(grad, cfg.cartesian_kernel, ConvMode::zero_pad);
        case EstimatorMode::ai: {
            if (grad.height != cfg.polar_grid.source_height ||
                grad.width != cfg.polar_grid.source_width)
                throw std::invalid_argument("estimate: gradient shape does not match polar grid");
            const ImageTensor cart = convolve2d(grad, cfg.cartesian_kernel, ConvMode::zero_pad);
            const ImageTensor pol = to_polar(cart, cfg.polar_grid);
            const ImageTensor smoothed =
                convolve2d(pol, cfg.polar_kernel, ConvMode::wrap_columns);
            return from_polar(smoothed, cfg.polar_grid, grad.height, grad.width);
        }
    }
    throw std::logic_error("estimate: bad mode");
}

namespace {

void accumulate(ImageTensor& acc, const ImageTensor& v) {
    for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += v.data[i];
}

void scale(ImageTensor& acc, double f) {
    for (double& v : acc.data) v *= f;
}

}  // namespace

ImageTensor sampled_g1(const ImageTensor& grad_at_x, const TransformDistribution& d,
                       int n_samples, const Rng& rng) {
    if (n_samples < 1) throw std::invalid_argument("sampled_g1: n_samples must be >= 1");
    ImageTensor acc(grad_at_x.channels, grad_at_x.height, grad_at_x.width);
    for (int i = 0; i < n_samples; ++i) {
        Rng stream = rng.split(i);
        const AffineParams p = sample_transform(d, stream);
        accumulate(acc, warp_inverse(grad_at_x, p));
    }
    scale(acc, 1.0 / n_samples);
    return acc;
}

ImageTensor sampled_g2(const VictimModel& model, const ImageTensor& x, int label,
                       const TransformDistribution& d, int n_samples, const Rng& rng) {
    if (n_samples < 1) throw std::invalid_argument("sampled_g2: n_samples must be >= 1");
    ImageTensor acc(x.channels, x.height, x.width);
    for (int i = 0; i < n_samples; ++i) {
        Rng stream = rng.split(i);
        const AffineParams p = sample_transform(d, stream);
        accumulate(acc, warp_inverse(model.input_gradient(warp_affine(x, p), label), p));
    }
    scale(acc, 1.0 / n_samples);
    return acc;
}

GradientStats compare_g1_g2(const VictimModel& model, const ImageTensor& x, int label,
                            const TransformDistribution& d, int n_samples, const Rng& rng) {
    if (n_samples < 1) throw std::invalid_argument("compare_g1_g2: n_samples must be >= 1");
    const ImageTensor grad_at_x = model.input_gradient(x, label);
    ImageTensor g1(x.channels, x.height, x.width);
    ImageTensor g2(x.channels, x.height, x.width);
    for (int i = 0; i < n_samples; ++i) {
        Rng stream = rng.split(i);
        const AffineParams p = sample_transform(d, stream);  // shared by both estimators
        accumulate(g1, warp_inverse(grad_at_x, p));
        accumulate(g2, warp_inverse(model.input_gradient(warp_affine(x, p), label), p));
    }
    scale(g1, 1.0 / n_samples);
    scale(g2, 1.0 / n_samples);

    GradientStats stats;
    stats.g1_norm = tensor_l2_norm(g1);
    stats.g2_norm = tensor_l2_norm(g2);
    double dist2 = 0.0;
    for (std::size_t i = 0; i < g1.data.size(); ++i) {
        const double diff = g2.data[i] - g1.data[i];
        dist2 += diff * diff;
    }
    stats.l2_distance = std::sqrt(dist2);
    if (stats.g1_norm < 1e-12 || stats.g2_norm < 1e-12) {
        stats.degenerate = true;
        stats.cosine_similarity = 0.0;
    } else {
        stats.cosine_similarity =
            std::clamp(tensor_dot(g1, g2) / (stats.g1_norm * stats.g2_norm), -1.0, 1.0);
    }
    return stats;
}

ImageTensor eot_gradient(const VictimModel& model, const ImageTensor& x, int label,
                         const TransformDistribution& d, int n_samples, const Rng& rng,
                         double* mean_loss) {
    if (n_samples < 1) throw std::invalid_argument("eot_gradient: n_samples must be >= 1");
    ImageTensor acc(x.channels, x.height, x.width);
    double loss_acc = 0.0;
    for (int i = 0; i < n_samples; ++i) {
        Rng stream = rng.split(i);
        const AffineParams p = sample_transform(d, stream);
        ImageTensor g;
        loss_acc += model.loss_and_input_gradient(warp_affine(x, p), label, g);
        accumulate(acc, g);
    }
    scale(acc, 1.0 / n_samples);
    if (mean_loss) *mean_loss = loss_acc / n_samples;
    return acc;
}

}  // namespace affina
