#pragma once

#include <array>
#include <string>
#include <vector>

#include "affina/rng.hpp"

namespace affina {

// C x H x W grid of reals, row-major (channel, row, column). Carries both
// images (intensities in [0,1]) and gradient maps (unbounded values).
struct ImageTensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    ImageTensor() = default;
    ImageTensor(int c, int h, int w)
        : channels(c), height(h), width(w), data(std::size_t(c) * h * w, 0.0) {}

    double& at(int c, int y, int x) {
        return data[(std::size_t(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return data[(std::size_t(c) * height + y) * width + x];
    }
    std::size_t size() const { return data.size(); }
    bool same_shape(const ImageTensor& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
};

double tensor_dot(const ImageTensor& a, const ImageTensor& b);
double tensor_l2_norm(const ImageTensor& a);
double tensor_max_abs_diff(const ImageTensor& a, const ImageTensor& b);

// Parameters of one affine transform: rotation angle (radians), uniform
// scale, and pixel translations along x (columns) and y (rows).
struct AffineParams {
    double theta = 0.0;
    double s = 1.0;
    double m = 0.0;
    double n = 0.0;

    bool is_identity() const { return theta == 0.0 && s == 1.0 && m == 0.0 && n == 0.0; }
};

// Independent uniform ranges: theta in [-theta_max, theta_max],
// s in [s_min, s_max], m in [-m_max, m_max], n in [-n_max, n_max].
struct TransformDistribution {
    double theta_max = 0.0;
    double s_min = 1.0;
    double s_max = 1.0;
    double m_max = 0.0;
    double n_max = 0.0;

    void validate() const;
    bool is_zero_width() const {
        return theta_max == 0.0 && s_min == 1.0 && s_max == 1.0 && m_max == 0.0 && n_max == 0.0;
    }
    // Shrinks every range about the identity by the given factor.
    TransformDistribution scaled(double factor) const;
};

// 3x3 matrix (row-major) acting on center-relative column vectors (x, y, 1):
// translation-after-scaled-rotation, i.e. v -> s*R(theta)*v + (m, n).
std::array<double, 9> affine_matrix(const AffineParams& p);

// Parameters whose matrix is the inverse of p's.
AffineParams invert_params(const AffineParams& p);

// Bilinear sample at continuous (row, col); out-of-bounds taps read 0.
double bilinear_sample(const ImageTensor& img, int c, double y, double x);

// Warp about the geometric image center ((H-1)/2, (W-1)/2): each output
// pixel is the bilinear sample of the input at the inverse-mapped location.
ImageTensor warp_affine(const ImageTensor& img, const AffineParams& p);

// warp_affine with analytically inverted parameters.
ImageTensor warp_inverse(const ImageTensor& img, const AffineParams& p);

AffineParams sample_transform(const TransformDistribution& d, Rng& rng);

// Bilinear resize with pixel-center alignment; identity when sizes match.
ImageTensor resize_bilinear(const ImageTensor& img, int out_h, int out_w);

// Adjoint (transpose) of resize_bilinear: maps a gradient w.r.t. the
// resized image back to a gradient w.r.t. an in_h x in_w input.
ImageTensor resize_bilinear_adjoint(const ImageTensor& grad_out, int in_h, int in_w);

// PGM (P5) / PPM (P6), 8-bit, intensity mapping round(v*255).
ImageTensor read_pnm(const std::string& path);
void write_pnm(const ImageTensor& img, const std::string& path);

}  // namespace affina
