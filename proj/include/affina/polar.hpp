#pragma once

#include "affina/image.hpp"

namespace affina {

// Sampling grid for the polar resampler: rows are radii, columns are
// angles. The angular axis is periodic (column j aliases j + A); the
// radial axis clamps at its ends.
struct PolarGrid {
    int radii = 0;   // R
    int angles = 0;  // A
    double r_max = 0.0;
    double center_row = 0.0;
    double center_col = 0.0;
    int source_height = 0;
    int source_width = 0;

    // Defaults: r_max = half-diagonal so corners are covered,
    // R = ceil(r_max) + 1, A = 4 * max(H, W).
    static PolarGrid for_image(int height, int width);
    static PolarGrid make(int radii, int angles, double r_max, int height, int width);

    void validate() const;
    double radius_of_row(int i) const { return (i + 0.5) * r_max / radii; }
};

// Polar pixel (i, j) samples the source at
// center + r_i * (sin phi_j, cos phi_j) in (row, col), r_i = (i+0.5)*r_max/R,
// phi_j = 2*pi*j/A. Out-of-image taps read 0. Output shape C x R x A.
ImageTensor to_polar(const ImageTensor& img, const PolarGrid& g);

// Inverse resampler: Cartesian pixel (y, x) samples the polar image at
// (r*R/r_max - 0.5, phi*A/(2*pi)) with angular wrap-around and radial clamp.
ImageTensor from_polar(const ImageTensor& polar_img, const PolarGrid& g, int out_height,
                       int out_width);

struct PolarShift {
    double radial_rows = 0.0;
    double angular_cols = 0.0;
};

// Rotation as an angular shift and scaling linearized as a radial shift
// about the reference radius r_max/2. Rejects nonzero translations
// (translation is handled in Cartesian space).
PolarShift polar_shift_of(const AffineParams& p, const PolarGrid& g);

}  // namespace affina
