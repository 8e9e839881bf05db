#pragma once

#include <vector>

#include "affina/image.hpp"

namespace affina {

enum class KernelKind { gaussian, uniform };

// Non-negative 2-D weight matrix with unit L1 norm and central symmetry.
// half_sizes (k1, k2) span row offsets [-k1, k1] and column offsets
// [-k2, k2]; weights are row-major, (2k1+1) x (2k2+1).
struct Kernel {
    int half_rows = 0;
    int half_cols = 0;
    std::vector<double> weights;
    KernelKind kind = KernelKind::gaussian;

    int rows() const { return 2 * half_rows + 1; }
    int cols() const { return 2 * half_cols + 1; }
    // weight at offset (dy, dx), dy in [-k1, k1], dx in [-k2, k2]
    double at(int dy, int dx) const {
        return weights[std::size_t(dy + half_rows) * cols() + (dx + half_cols)];
    }
    bool is_identity() const { return half_rows == 0 && half_cols == 0; }

    // Throws unless non-negative, unit L1 (1e-12) and centrally symmetric.
    void validate() const;
};

// Gaussian weights exp(-(i^2+j^2)/(2*s1*s2)) with s1 = k1/sqrt(3),
// s2 = k2/sqrt(3), divided by their L1 norm. A zero half-size collapses
// that axis to a single row/column and the kernel reduces to the other
// axis's 1-D Gaussian; k1 = k2 = 0 gives the 1x1 identity kernel.
Kernel gaussian_kernel(int k1, int k2);

// Every weight equal to 1 / ((2k1+1)(2k2+1)).
Kernel uniform_kernel(int k1, int k2);

Kernel make_kernel(KernelKind kind, int k1, int k2);

enum class ConvMode {
    zero_pad,      // all out-of-range taps read 0
    wrap_columns,  // columns wrap circularly, out-of-range rows read 0
};

// Same-shape cross-correlation of each channel with the kernel. Identical
// to convolution here because every kernel is centrally symmetric.
ImageTensor convolve2d(const ImageTensor& img, const Kernel& k, ConvMode mode);

}  // namespace affina
