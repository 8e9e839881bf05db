#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "affina/image.hpp"

namespace affina {

struct Dataset {
    std::vector<ImageTensor> images;
    std::vector<int> labels;
    std::vector<std::string> class_names;

    std::size_t size() const { return images.size(); }
    int num_classes() const;
    void validate() const;
    Dataset subset(std::size_t first, std::size_t count) const;
};

class IdxError : public std::runtime_error {
public:
    enum class Code { bad_magic, truncated, count_mismatch, io };
    IdxError(Code code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    Code code() const { return code_; }

private:
    Code code_;
};

// IDX: big-endian u32 magic (0x00000803 for 3-D u8 images, 0x00000801 for
// 1-D u8 labels), big-endian u32 dims, raw u8 payload; intensities u8/255.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
void write_idx(const Dataset& ds, const std::string& images_path,
               const std::string& labels_path);

// Deterministic 3-class corpus: filled disk, axis-aligned square,
// equilateral triangle, rendered antialiased at a random center inside the
// central 60%, random size 25-45% of the image, random foreground
// intensity in [0.5, 1] on background in [0, 0.2]. Classes interleave so
// every prefix stays balanced.
Dataset synth_shapes(int n_per_class, int image_size, std::uint64_t rng_seed);

// Appends `copies_per_image` warped copies of every image, sampled from d.
Dataset augment_dataset(const Dataset& ds, const TransformDistribution& d,
                        int copies_per_image, std::uint64_t rng_seed);

}  // namespace affina
