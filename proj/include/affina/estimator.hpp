#pragma once

#include "affina/image.hpp"
#include "affina/kernels.hpp"
#include "affina/polar.hpp"
#include "affina/victim.hpp"

namespace affina {

enum class EstimatorMode { ai, ti, identity };

// Half-sizes mapping distribution widths to kernel extents: translation
// ranges map to the Cartesian kernel (columns from m, rows from n), the
// scale range maps to radial rows and the angle range to angular columns
// of the polar kernel.
struct DerivedKernelSizes {
    int cart_rows = 0;
    int cart_cols = 0;
    int polar_rows = 0;
    int polar_cols = 0;
};

DerivedKernelSizes derived_half_sizes(const TransformDistribution& d, const PolarGrid& g);

// The affine-invariant gradient estimator: a Cartesian convolution with
// the translation kernel followed by a convolution in polar space.
// TI mode keeps only the Cartesian stage; identity passes gradients
// through untouched.
struct EstimatorConfig {
    Kernel cartesian_kernel;
    Kernel polar_kernel;
    PolarGrid polar_grid;
    EstimatorMode mode = EstimatorMode::identity;

    static EstimatorConfig identity();
    static EstimatorConfig ti(Kernel cartesian);
    static EstimatorConfig ai(Kernel cartesian, Kernel polar, PolarGrid grid);
    static EstimatorConfig for_distribution(const TransformDistribution& d, int height,
                                            int width, KernelKind kind = KernelKind::gaussian);
};

ImageTensor estimate(const ImageTensor& grad, const EstimatorConfig& cfg);

// Monte-Carlo estimate of E[F^-1(grad)]: the approximated expected
// gradient computed from one gradient map at the original image.
ImageTensor sampled_g1(const ImageTensor& grad_at_x, const TransformDistribution& d,
                       int n_samples, const Rng& rng);

// Exact expectation estimator E[F^-1(grad at F(x))]; ground truth for the
// approximation-error checks.
ImageTensor sampled_g2(const VictimModel& model, const ImageTensor& x, int label,
                       const TransformDistribution& d, int n_samples, const Rng& rng);

struct GradientStats {
    double l2_distance = 0.0;
    double cosine_similarity = 1.0;
    double g1_norm = 0.0;
    double g2_norm = 0.0;
    bool degenerate = false;  // either norm below 1e-12
};

// g1 and g2 evaluated on a shared transform sample sequence (common
// random numbers), with their distance, cosine similarity and norms.
GradientStats compare_g1_g2(const VictimModel& model, const ImageTensor& x, int label,
                            const TransformDistribution& d, int n_samples, const Rng& rng);

// Expected-loss gradient E[grad at F(x)] without the inverse warp; the
// quantity the EOT baseline ascends. mean_loss, when non-null, receives
// the average sampled loss.
ImageTensor eot_gradient(const VictimModel& model, const ImageTensor& x, int label,
                         const TransformDistribution& d, int n_samples, const Rng& rng,
                         double* mean_loss = nullptr);

}  // namespace affina
