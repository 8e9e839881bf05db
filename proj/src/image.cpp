#include "affina/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace affina {

double tensor_dot(const ImageTensor& a, const ImageTensor& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) acc += a.data[i] * b.data[i];
    return acc;
}

double tensor_l2_norm(const ImageTensor& a) { return std::sqrt(tensor_dot(a, a)); }

double tensor_max_abs_diff(const ImageTensor& a, const ImageTensor& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        acc = std::max(acc, std::abs(a.data[i] - b.data[i]));
    return acc;
}

void TransformDistribution::validate() const {
    if (!(theta_max >= 0.0) || !std::isfinite(theta_max))
        throw std::invalid_argument("TransformDistribution: theta_max must be >= 0");
    if (!(s_min > 0.0) || !(s_min <= s_max))
        throw std::invalid_argument("TransformDistribution: need 0 < s_min <= s_max");
    if (!(m_max >= 0.0) || !(n_max >= 0.0))
        throw std::invalid_argument("TransformDistribution: m_max, n_max must be >= 0");
}

TransformDistribution TransformDistribution::scaled(double factor) const {
    TransformDistribution d;
    d.theta_max = theta_max * factor;
    d.s_min = 1.0 - factor * (1.0 - s_min);
    d.s_max = 1.0 + factor * (s_max - 1.0);
    d.m_max = m_max * factor;
    d.n_max = n_max * factor;
    return d;
}

std::array<double, 9> affine_matrix(const AffineParams& p) {
    const double c = p.s * std::cos(p.theta);
    const double s = p.s * std::sin(p.theta);
    return {c, -s, p.m,
            s,  c, p.n,
            0,  0, 1};
}

AffineParams invert_params(const AffineParams& p) {
    if (!(p.s > 0.0)) throw std::invalid_argument("AffineParams: s must be > 0");
    const double c = std::cos(p.theta);
    const double s = std::sin(p.theta);
    AffineParams inv;
    inv.theta = -p.theta;
    inv.s = 1.0 / p.s;
    // t' = -(1/s) R(-theta) t
    inv.m = -(c * p.m + s * p.n) / p.s;
    inv.n = -(-s * p.m + c * p.n) / p.s;
    return inv;
}

double bilinear_sample(const ImageTensor& img, int c, double y, double x) {
    const int h = img.height, w = img.width;
    if (y <= -1.0 || y >= double(h) || x <= -1.0 || x >= double(w)) return 0.0;
    const int y0 = int(std::floor(y));
    const int x0 = int(std::floor(x));
    const double fy = y - y0;
    const double fx = x - x0;
    auto px = [&](int yy, int xx) -> double {
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0;
        return img.at(c, yy, xx);
    };
    const double top = std::lerp(px(y0, x0), px(y0, x0 + 1), fx);
    const double bot = std::lerp(px(y0 + 1, x0), px(y0 + 1, x0 + 1), fx);
    return std::lerp(top, bot, fy);
}

ImageTensor warp_affine(const ImageTensor& img, const AffineParams& p) {
    const AffineParams inv = invert_params(p);
    const double ic = inv.s * std::cos(inv.theta);
    const double is = inv.s * std::sin(inv.theta);
    const double cy = 0.5 * (img.height - 1);
    const double cx = 0.5 * (img.width - 1);
    ImageTensor out(img.channels, img.height, img.width);
    for (int c = 0; c < img.channels; ++c) {
        for (int y = 0; y < img.height; ++y) {
            const double dy = y - cy;
            for (int x = 0; x < img.width; ++x) {
                const double dx = x - cx;
                const double sx = ic * dx - is * dy + inv.m + cx;
                const double sy = is * dx + ic * dy + inv.n + cy;
                out.at(c, y, x) = bilinear_sample(img, c, sy, sx);
            }
        }
    }
    return out;
}

ImageTensor warp_inverse(const ImageTensor& img, const AffineParams& p) {
    return warp_affine(img, invert_params(p));
}

AffineParams sample_transform(const TransformDistribution& d, Rng& rng) {
    d.validate();
    AffineParams p;
    p.theta = rng.uniform(-d.theta_max, d.theta_max);
    p.s = rng.uniform(d.s_min, d.s_max);
    p.m = rng.uniform(-d.m_max, d.m_max);
    p.n = rng.uniform(-d.n_max, d.n_max);
    return p;
}

ImageTensor resize_bilinear(const ImageTensor& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize_bilinear: bad size");
    const double ry = double(img.height) / out_h;
    const double rx = double(img.width) / out_w;
    ImageTensor out(img.channels, out_h, out_w);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < out_h; ++y)
            for (int x = 0; x < out_w; ++x)
                out.at(c, y, x) =
                    bilinear_sample(img, c, (y + 0.5) * ry - 0.5, (x + 0.5) * rx - 0.5);
    return out;
}

ImageTensor resize_bilinear_adjoint(const ImageTensor& grad_out, int in_h, int in_w) {
    const double ry = double(in_h) / grad_out.height;
    const double rx = double(in_w) / grad_out.width;
    ImageTensor out(grad_out.channels, in_h, in_w);
    for (int c = 0; c < grad_out.channels; ++c) {
        for (int y = 0; y < grad_out.height; ++y) {
            const double sy = (y + 0.5) * ry - 0.5;
            const int y0 = int(std::floor(sy));
            const double fy = sy - y0;
            for (int x = 0; x < grad_out.width; ++x) {
                const double sx = (x + 0.5) * rx - 0.5;
                const int x0 = int(std::floor(sx));
                const double fx = sx - x0;
                const double g = grad_out.at(c, y, x);
                const double w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx;
                const double w10 = fy * (1 - fx), w11 = fy * fx;
                auto add = [&](int yy, int xx, double w) {
                    if (yy >= 0 && yy < in_h && xx >= 0 && xx < in_w) out.at(c, yy, xx) += w * g;
                };
                add(y0, x0, w00);
                add(y0, x0 + 1, w01);
                add(y0 + 1, x0, w10);
                add(y0 + 1, x0 + 1, w11);
            }
        }
    }
    return out;
}

namespace {

int read_pnm_token(std::istream& in) {
    // skips whitespace and '#' comments per the netpbm grammar
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    if (c == EOF) throw std::runtime_error("pnm: truncated header");
    int value = 0;
    bool any = false;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        any = true;
        c = in.get();
    }
    if (!any) throw std::runtime_error("pnm: malformed header");
    return value;
}

}  // namespace

ImageTensor read_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("pnm: cannot open " + path);
    char magic[2] = {0, 0};
    in.read(magic, 2);
    int channels;
    if (magic[0] == 'P' && magic[1] == '5') channels = 1;
    else if (magic[0] == 'P' && magic[1] == '6') channels = 3;
    else throw std::runtime_error("pnm: bad magic in " + path);
    const int w = read_pnm_token(in);
    const int h = read_pnm_token(in);
    const int maxval = read_pnm_token(in);
    if (maxval != 255) throw std::runtime_error("pnm: only maxval 255 supported");
    std::vector<unsigned char> raw(std::size_t(channels) * h * w);
    in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (std::size_t(in.gcount()) != raw.size()) throw std::runtime_error("pnm: truncated payload");
    ImageTensor img(channels, h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(c, y, x) = raw[(std::size_t(y) * w + x) * channels + c] / 255.0;
    return img;
}

void write_pnm(const ImageTensor& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3)
        throw std::invalid_argument("pnm: only 1- or 3-channel tensors");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("pnm: cannot write " + path);
    out << (img.channels == 1 ? "P5" : "P6") << "\n"
        << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> raw(std::size_t(img.channels) * img.height * img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                const double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
                raw[(std::size_t(y) * img.width + x) * img.channels + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0));
            }
    out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
    if (!out) throw std::runtime_error("pnm: write failed for " + path);
}

}  // namespace affina
