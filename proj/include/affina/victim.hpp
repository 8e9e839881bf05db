#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "affina/data_io.hpp"
#include "affina/image.hpp"

namespace affina {

struct Tensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> data;

    std::size_t count() const {
        std::size_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }
};

enum class Architecture { linear, small_cnn };

class WeightsError : public std::runtime_error {
public:
    enum class Code { bad_magic, bad_version, truncated, shape_mismatch, io };
    WeightsError(Code code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    Code code() const { return code_; }

private:
    Code code_;
};

// Desk-scale differentiable classifier with hand-written forward/backward.
// small_cnn: conv3x3(8)-ReLU-maxpool2-conv3x3(16)-ReLU-maxpool2-dense(L),
// 3x3 convolutions zero-padded to keep spatial size. linear: softmax
// regression on the flattened input. Parameters are float32; all math
// runs in double. Inference and gradients on a frozen model are pure.
class VictimModel {
public:
    static VictimModel make_linear(int channels, int height, int width, int num_classes,
                                   std::uint64_t init_seed);
    static VictimModel make_small_cnn(int channels, int height, int width, int num_classes,
                                      std::uint64_t init_seed);

    Architecture architecture() const { return arch_; }
    std::array<int, 3> input_shape() const { return {channels_, height_, width_}; }
    int num_classes() const { return num_classes_; }

    std::vector<double> forward(const ImageTensor& x) const;
    double loss(const ImageTensor& x, int label) const;
    ImageTensor input_gradient(const ImageTensor& x, int label) const;
    double loss_and_input_gradient(const ImageTensor& x, int label, ImageTensor& grad) const;
    // loss value; param_grads (one flat vector per parameter tensor, in
    // parameter order) and input_grad filled when non-null
    double backward(const ImageTensor& x, int label,
                    std::vector<std::vector<double>>* param_grads,
                    ImageTensor* input_grad) const;
    int predict(const ImageTensor& x) const;

    std::vector<std::pair<std::string, Tensor>>& parameters() { return params_; }
    const std::vector<std::pair<std::string, Tensor>>& parameters() const { return params_; }

    // Number of input-gradient evaluations since construction; shared
    // across copies of the same model.
    std::uint64_t gradient_evals() const { return gradient_evals_->load(); }
    void reset_gradient_evals() const { gradient_evals_->store(0); }

private:
    VictimModel() : gradient_evals_(std::make_shared<std::atomic<std::uint64_t>>(0)) {}
    void check_input(const ImageTensor& x) const;
    const Tensor& param(const char* name) const;
    Tensor& param(const char* name);

    Architecture arch_ = Architecture::linear;
    int channels_ = 0, height_ = 0, width_ = 0, num_classes_ = 0;
    std::vector<std::pair<std::string, Tensor>> params_;
    std::shared_ptr<std::atomic<std::uint64_t>> gradient_evals_;

    friend VictimModel load_weights(const std::string& path);
};

std::vector<double> softmax(const std::vector<double>& logits);

struct TrainConfig {
    int epochs = 15;
    int batch_size = 32;
    double learning_rate = 0.05;
    std::uint64_t rng_seed = 1;
};

// Mini-batch SGD on cross-entropy; deterministic given cfg.rng_seed.
// Returns final training accuracy.
double train(VictimModel& model, const Dataset& data, const TrainConfig& cfg);

double accuracy(const VictimModel& model, const Dataset& data);

// Weight file: magic "AIGW", u32-LE version (=1), u32-LE tensor count;
// per tensor: u16-LE name length + UTF-8 name, u8 ndim, ndim x u32-LE
// dims, then f32-LE values.
void save_weights(const VictimModel& model, const std::string& path);
VictimModel load_weights(const std::string& path);

// Quantizes each intensity to 2^bits levels: round(v*(2^bits-1))/(2^bits-1).
ImageTensor bit_depth_reduce(const ImageTensor& x, int bits);

}  // namespace affina
