#include "affina/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace affina {

void Kernel::validate() const {
    if (half_rows < 0 || half_cols < 0) throw std::invalid_argument("Kernel: negative half size");
    if (weights.size() != std::size_t(rows()) * cols())
        throw std::invalid_argument("Kernel: weight count mismatch");
    double l1 = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw std::invalid_argument("Kernel: negative weight");
        l1 += w;
    }
    if (std::abs(l1 - 1.0) > 1e-12) throw std::invalid_argument("Kernel: L1 norm != 1");
    for (int i = -half_rows; i <= half_rows; ++i)
        for (int j = -half_cols; j <= half_cols; ++j)
            if (at(i, j) != at(-i, -j)) throw std::invalid_argument("Kernel: not centrally symmetric");
}

namespace {

Kernel normalized(Kernel k) {
    double l1 = 0.0;
    for (double w : k.weights) l1 += w;
    for (double& w : k.weights) w /= l1;
    k.validate();
    return k;
}

}  // namespace

Kernel gaussian_kernel(int k1, int k2) {
    if (k1 < 0 || k2 < 0) throw std::invalid_argument("gaussian_kernel: half sizes must be >= 0");
    Kernel k;
    k.kind = KernelKind::gaussian;
    k.half_rows = k1;
    k.half_cols = k2;
    k.weights.assign(std::size_t(k.rows()) * k.cols(), 1.0);
    if (k1 == 0 && k2 == 0) return normalized(k);  // 1x1 identity kernel
    // Per-axis sigmas k/sqrt(3) (the variance of a uniform shift over
    // [-k, k]); identical to the single-denominator form whenever
    // k1 == k2, and a zero half-size collapses to the other axis's 1-D
    // Gaussian. Per-axis widths keep each axis matched to its own shift
    // range when the two half-sizes differ.
    const double s1 = k1 / std::sqrt(3.0);
    const double s2 = k2 / std::sqrt(3.0);
    for (int i = -k1; i <= k1; ++i)
        for (int j = -k2; j <= k2; ++j) {
            const double rows_term = k1 == 0 ? 0.0 : double(i) * i / (2.0 * s1 * s1);
            const double cols_term = k2 == 0 ? 0.0 : double(j) * j / (2.0 * s2 * s2);
            k.weights[std::size_t(i + k1) * k.cols() + (j + k2)] =
                std::exp(-(rows_term + cols_term));
        }
    return normalized(k);
}

Kernel uniform_kernel(int k1, int k2) {
    if (k1 < 0 || k2 < 0) throw std::invalid_argument("uniform_kernel: half sizes must be >= 0");
    Kernel k;
    k.kind = KernelKind::uniform;
    k.half_rows = k1;
    k.half_cols = k2;
    k.weights.assign(std::size_t(k.rows()) * k.cols(), 1.0 / (double(k.rows()) * k.cols()));
    k.validate();
    return k;
}

Kernel make_kernel(KernelKind kind, int k1, int k2) {
    return kind == KernelKind::gaussian ? gaussian_kernel(k1, k2) : uniform_kernel(k1, k2);
}

ImageTensor convolve2d(const ImageTensor& img, const Kernel& k, ConvMode mode) {
    if (k.is_identity()) return img;  // bit-exact passthrough
    const int h = img.height, w = img.width;
    ImageTensor out(img.channels, h, w);
    for (int c = 0; c < img.channels; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int i = -k.half_rows; i <= k.half_rows; ++i) {
                    const int yy = y + i;
                    if (yy < 0 || yy >= h) continue;
                    for (int j = -k.half_cols; j <= k.half_cols; ++j) {
                        int xx = x + j;
                        if (mode == ConvMode::wrap_columns) {
                            xx = ((xx % w) + w) % w;
                        } else if (xx < 0 || xx >= w) {
                            continue;
                        }
                        acc += k.at(i, j) * img.at(c, yy, xx);
                    }
                }
                out.at(c, y, x) = acc;
            }
        }
    }
    return out;
}

}  // namespace affina
