#include "affina/polar.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace affina {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

PolarGrid PolarGrid::for_image(int height, int width) {
    const double r_max = 0.5 * std::hypot(double(height), double(width));
    const int radii = int(std::ceil(r_max)) + 1;
    const int angles = 4 * std::max(height, width);
    return make(radii, angles, r_max, height, width);
}

PolarGrid PolarGrid::make(int radii, int angles, double r_max, int height, int width) {
    PolarGrid g;
    g.radii = radii;
    g.angles = angles;
    g.r_max = r_max;
    g.center_row = 0.5 * (height - 1);
    g.center_col = 0.5 * (width - 1);
    g.source_height = height;
    g.source_width = width;
    g.validate();
    return g;
}

void PolarGrid::validate() const {
    if (radii < 2 || angles < 8) throw std::invalid_argument("PolarGrid: need R >= 2, A >= 8");
    if (!(r_max > 0.0)) throw std::invalid_argument("PolarGrid: r_max must be > 0");
    if (source_height < 1 || source_width < 1)
        throw std::invalid_argument("PolarGrid: bad source size");
    if (center_row < 0 || center_row > source_height - 1 || center_col < 0 ||
        center_col > source_width - 1)
        throw std::invalid_argument("PolarGrid: center outside the source image");
}

ImageTensor to_polar(const ImageTensor& img, const PolarGrid& g) {
    if (img.height != g.source_height || img.width != g.source_width)
        throw std::invalid_argument("to_polar: image shape does not match grid");
    ImageTensor out(img.channels, g.radii, g.angles);
    std::vector<double> cos_phi(g.angles), sin_phi(g.angles);
    for (int j = 0; j < g.angles; ++j) {
        const double phi = kTwoPi * j / g.angles;
        cos_phi[j] = std::cos(phi);
        sin_phi[j] = std::sin(phi);
    }
    for (int c = 0; c < img.channels; ++c)
        for (int i = 0; i < g.radii; ++i) {
            const double r = g.radius_of_row(i);
            for (int j = 0; j < g.angles; ++j)
                out.at(c, i, j) = bilinear_sample(img, c, g.center_row + r * sin_phi[j],
                                                  g.center_col + r * cos_phi[j]);
        }
    return out;
}

ImageTensor from_polar(const ImageTensor& polar_img, const PolarGrid& g, int out_height,
                       int out_width) {
    if (polar_img.height != g.radii || polar_img.width != g.angles)
        throw std::invalid_argument("from_polar: polar shape does not match grid");
    const int rows = g.radii, cols = g.angles;
    ImageTensor out(polar_img.channels, out_height, out_width);
    const double cy = 0.5 * (out_height - 1);
    const double cx = 0.5 * (out_width - 1);
    for (int c = 0; c < polar_img.channels; ++c) {
        for (int y = 0; y < out_height; ++y) {
            const double dy = y - cy;
            for (int x = 0; x < out_width; ++x) {
                const double dx = x - cx;
                const double r = std::hypot(dx, dy);
                double phi = std::atan2(dy, dx);
                if (phi < 0) phi += kTwoPi;
                // radial: clamp; angular: wrap
                double u = r * rows / g.r_max - 0.5;
                u = std::clamp(u, 0.0, double(rows - 1));
                const double v = phi * cols / kTwoPi;
                const int i0 = int(std::floor(u));
                const int i1 = std::min(i0 + 1, rows - 1);
                const double fi = u - i0;
                int j0 = int(std::floor(v)) % cols;
                if (j0 < 0) j0 += cols;
                const int j1 = (j0 + 1) % cols;
                const double fj = v - std::floor(v);
                const double lo =
                    std::lerp(polar_img.at(c, i0, j0), polar_img.at(c, i0, j1), fj);
                const double hi =
                    std::lerp(polar_img.at(c, i1, j0), polar_img.at(c, i1, j1), fj);
                out.at(c, y, x) = std::lerp(lo, hi, fi);
            }
        }
    }
    return out;
}

PolarShift polar_shift_of(const AffineParams& p, const PolarGrid& g) {
    if (p.m != 0.0 || p.n != 0.0)
        throw std::invalid_argument("polar_shift_of: translation must be zero");
    PolarShift shift;
    shift.angular_cols = p.theta * g.angles / kTwoPi;
    const double r_ref = 0.5 * g.r_max;  // linearization point
    shift.radial_rows = (p.s - 1.0) * r_ref * g.radii / g.r_max;
    return shift;
}

}  // namespace affina
