#include "affina/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace affina {

int Dataset::num_classes() const {
    if (!class_names.empty()) return int(class_names.size());
    int max_label = -1;
    for (int l : labels) max_label = std::max(max_label, l);
    return max_label + 1;
}

void Dataset::validate() const {
    if (images.size() != labels.size())
        throw std::invalid_argument("Dataset: image/label count mismatch");
    const int classes = num_classes();
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= classes)
            throw std::invalid_argument("Dataset: label out of range");
        if (!images[i].same_shape(images[0]))
            throw std::invalid_argument("Dataset: non-uniform image shape");
    }
}

Dataset Dataset::subset(std::size_t first, std::size_t count) const {
    Dataset out;
    out.class_names = class_names;
    const std::size_t last = std::min(first + count, images.size());
    for (std::size_t i = first; i < last; ++i) {
        out.images.push_back(images[i]);
        out.labels.push_back(labels[i]);
    }
    return out;
}

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_u32be(std::istream& in, const std::string& what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw IdxError(IdxError::Code::truncated, "idx: truncated " + what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_u32be(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw IdxError(IdxError::Code::io, "idx: cannot open " + images_path);
    if (read_u32be(imgs, "image magic") != kImageMagic)
        throw IdxError(IdxError::Code::bad_magic, "idx: bad magic in " + images_path);
    const std::uint32_t count = read_u32be(imgs, "image count");
    const std::uint32_t h = read_u32be(imgs, "image height");
    const std::uint32_t w = read_u32be(imgs, "image width");
    std::vector<unsigned char> payload(std::size_t(count) * h * w);
    imgs.read(reinterpret_cast<char*>(payload.data()), std::streamsize(payload.size()));
    if (std::size_t(imgs.gcount()) != payload.size())
        throw IdxError(IdxError::Code::truncated, "idx: truncated image payload in " + images_path);

    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw IdxError(IdxError::Code::io, "idx: cannot open " + labels_path);
    if (read_u32be(labs, "label magic") != kLabelMagic)
        throw IdxError(IdxError::Code::bad_magic, "idx: bad magic in " + labels_path);
    const std::uint32_t label_count = read_u32be(labs, "label count");
    if (label_count != count)
        throw IdxError(IdxError::Code::count_mismatch, "idx: image/label count mismatch");
    std::vector<unsigned char> raw_labels(label_count);
    labs.read(reinterpret_cast<char*>(raw_labels.data()), std::streamsize(raw_labels.size()));
    if (std::size_t(labs.gcount()) != raw_labels.size())
        throw IdxError(IdxError::Code::truncated, "idx: truncated label payload in " + labels_path);

    Dataset ds;
    ds.images.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        ImageTensor img(1, int(h), int(w));
        const unsigned char* src = payload.data() + std::size_t(i) * h * w;
        for (std::size_t p = 0; p < std::size_t(h) * w; ++p) img.data[p] = src[p] / 255.0;
        ds.images.push_back(std::move(img));
        ds.labels.push_back(int(raw_labels[i]));
    }
    return ds;
}

void write_idx(const Dataset& ds, const std::string& images_path,
               const std::string& labels_path) {
    ds.validate();
    if (!ds.images.empty() && ds.images[0].channels != 1)
        throw std::invalid_argument("write_idx: only single-channel datasets");
    const int h = ds.images.empty() ? 0 : ds.images[0].height;
    const int w = ds.images.empty() ? 0 : ds.images[0].width;

    std::ofstream imgs(images_path, std::ios::binary);
    if (!imgs) throw IdxError(IdxError::Code::io, "idx: cannot write " + images_path);
    write_u32be(imgs, kImageMagic);
    write_u32be(imgs, std::uint32_t(ds.size()));
    write_u32be(imgs, std::uint32_t(h));
    write_u32be(imgs, std::uint32_t(w));
    for (const ImageTensor& img : ds.images)
        for (double v : img.data) {
            const unsigned char b =
                static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
            imgs.write(reinterpret_cast<const char*>(&b), 1);
        }

    std::ofstream labs(labels_path, std::ios::binary);
    if (!labs) throw IdxError(IdxError::Code::io, "idx: cannot write " + labels_path);
    write_u32be(labs, kLabelMagic);
    write_u32be(labs, std::uint32_t(ds.size()));
    for (int l : ds.labels) {
        const unsigned char b = static_cast<unsigned char>(l);
        labs.write(reinterpret_cast<const char*>(&b), 1);
    }
}

namespace {

// Signed distance to an equilateral triangle (circumradius rc, apex toward
// -y). Intersection of the three edge half-planes; exact inside and near
// edges, which is all the 1px antialiasing band needs.
double triangle_sdf(double px, double py, double rc) {
    const double inradius = 0.5 * rc;
    const double rt3h = std::sqrt(3.0) * 0.5;
    const double d0 = py - inradius;
    const double d1 = (-rt3h * px - 0.5 * py) - inradius;
    const double d2 = (rt3h * px - 0.5 * py) - inradius;
    return std::max({d0, d1, d2});
}

}  // namespace

Dataset synth_shapes(int n_per_class, int image_size, std::uint64_t rng_seed) {
    if (image_size < 32) throw std::invalid_argument("synth_shapes: image_size must be >= 32");
    if (n_per_class < 1) throw std::invalid_argument("synth_shapes: n_per_class must be >= 1");
    Dataset ds;
    ds.class_names = {"disk", "square", "triangle"};
    const Rng base(rng_seed);
    const double size = image_size;
    for (int i = 0; i < n_per_class; ++i) {
        for (int cls = 0; cls < 3; ++cls) {
            Rng rng = base.split(std::uint64_t(i) * 3 + cls);
            const double cx = rng.uniform(0.2 * size, 0.8 * size);
            const double cy = rng.uniform(0.2 * size, 0.8 * size);
            const double extent = rng.uniform(0.25, 0.45) * size;  // shape diameter
            const double fg = rng.uniform(0.5, 1.0);
            const double bg = rng.uniform(0.0, 0.2);
            ImageTensor img(1, image_size, image_size);
            for (int y = 0; y < image_size; ++y) {
                for (int x = 0; x < image_size; ++x) {
                    const double dx = x - cx, dy = y - cy;
                    double sdf;
                    if (cls == 0) {
                        sdf = std::hypot(dx, dy) - 0.5 * extent;
                    } else if (cls == 1) {
                        sdf = std::max(std::abs(dx), std::abs(dy)) - 0.5 * extent;
                    } else {
                        sdf = triangle_sdf(dx, dy, 0.5 * extent);
                    }
                    const double coverage = std::clamp(0.5 - sdf, 0.0, 1.0);  // ~1px AA edge
                    img.at(0, y, x) = bg + (fg - bg) * coverage;
                }
            }
            ds.images.push_back(std::move(img));
            ds.labels.push_back(cls);
        }
    }
    return ds;
}

Dataset augment_dataset(const Dataset& ds, const TransformDistribution& d, int copies_per_image,
                        std::uint64_t rng_seed) {
    Dataset out = ds;
    const Rng base(rng_seed);
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        Rng rng = base.split(i);
        for (int c = 0; c < copies_per_image; ++c) {
            const AffineParams p = sample_transform(d, rng);
            out.images.push_back(warp_affine(ds.images[i], p));
            out.labels.push_back(ds.labels[i]);
        }
    }
    return out;
}

}  // namespace affina
