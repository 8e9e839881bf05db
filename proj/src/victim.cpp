#include "affina/victim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace affina {

namespace {

constexpr char kMagic[4] = {'A', 'I', 'G', 'W'};
constexpr std::uint32_t kVersion = 1;

double relu(double v) { return v > 0.0 ? v : 0.0; }

struct ConvShape {
    int in_c, in_h, in_w;
    int out_c;  // 3x3 kernel, pad 1, stride 1: spatial size preserved
};

// out[f][y][x] = bias[f] + sum w[f][c][ky][kx] * in[c][y+ky-1][x+kx-1]
void conv3x3_forward(const std::vector<double>& in, const float* w, const float* b,
                     const ConvShape& s, std::vector<double>& out) {
    out.assign(std::size_t(s.out_c) * s.in_h * s.in_w, 0.0);
    for (int f = 0; f < s.out_c; ++f) {
        double* dst = &out[std::size_t(f) * s.in_h * s.in_w];
        for (int y = 0; y < s.in_h; ++y)
            for (int x = 0; x < s.in_w; ++x) dst[std::size_t(y) * s.in_w + x] = b[f];
        for (int c = 0; c < s.in_c; ++c) {
            const double* src = &in[std::size_t(c) * s.in_h * s.in_w];
            const float* wf = w + ((std::size_t(f) * s.in_c + c) * 9);
            for (int y = 0; y < s.in_h; ++y) {
                for (int x = 0; x < s.in_w; ++x) {
                    double acc = 0.0;
                    for (int ky = 0; ky < 3; ++ky) {
                        const int yy = y + ky - 1;
                        if (yy < 0 || yy >= s.in_h) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int xx = x + kx - 1;
                            if (xx < 0 || xx >= s.in_w) continue;
                            acc += double(wf[ky * 3 + kx]) * src[std::size_t(yy) * s.in_w + xx];
                        }
                    }
                    dst[std::size_t(y) * s.in_w + x] += acc;
                }
            }
        }
    }
}

// Gradients w.r.t. weights/bias/input of conv3x3_forward.
void conv3x3_backward(const std::vector<double>& in, const float* w, const ConvShape& s,
                      const std::vector<double>& dout, std::vector<double>* dw,
                      std::vector<double>* db, std::vector<double>* din) {
    if (dw) dw->assign(std::size_t(s.out_c) * s.in_c * 9, 0.0);
    if (db) db->assign(s.out_c, 0.0);
    if (din) din->assign(std::size_t(s.in_c) * s.in_h * s.in_w, 0.0);
    for (int f = 0; f < s.out_c; ++f) {
        const double* g = &dout[std::size_t(f) * s.in_h * s.in_w];
        if (db)
            for (int i = 0; i < s.in_h * s.in_w; ++i) (*db)[f] += g[i];
        for (int c = 0; c < s.in_c; ++c) {
            const double* src = &in[std::size_t(c) * s.in_h * s.in_w];
            const float* wf = w + ((std::size_t(f) * s.in_c + c) * 9);
            double* dwf = dw ? &(*dw)[(std::size_t(f) * s.in_c + c) * 9] : nullptr;
            double* dsrc = din ? &(*din)[std::size_t(c) * s.in_h * s.in_w] : nullptr;
            for (int y = 0; y < s.in_h; ++y) {
                for (int x = 0; x < s.in_w; ++x) {
                    const double gv = g[std::size_t(y) * s.in_w + x];
                    if (gv == 0.0) continue;
                    for (int ky = 0; ky < 3; ++ky) {
                        const int yy = y + ky - 1;
                        if (yy < 0 || yy >= s.in_h) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int xx = x + kx - 1;
                            if (xx < 0 || xx >= s.in_w) continue;
                            const std::size_t si = std::size_t(yy) * s.in_w + xx;
                            if (dwf) dwf[ky * 3 + kx] += gv * src[si];
                            if (dsrc) dsrc[si] += gv * double(wf[ky * 3 + kx]);
                        }
                    }
                }
            }
        }
    }
}

// 2x2 max pool, stride 2, floor dims; argmax stores the flat input index
// (first max wins on ties).
void maxpool2_forward(const std::vector<double>& in, int ch, int h, int w,
                      std::vector<double>& out, std::vector<int>& argmax) {
    const int oh = h / 2, ow = w / 2;
    out.assign(std::size_t(ch) * oh * ow, 0.0);
    argmax.assign(std::size_t(ch) * oh * ow, 0);
    for (int c = 0; c < ch; ++c) {
        const double* src = &in[std::size_t(c) * h * w];
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                int best = (2 * y) * w + 2 * x;
                double bv = src[best];
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const int idx = (2 * y + dy) * w + (2 * x + dx);
                        if (src[idx] > bv) {
                            bv = src[idx];
                            best = idx;
                        }
                    }
                const std::size_t oi = std::size_t(c) * oh * ow + std::size_t(y) * ow + x;
                out[oi] = bv;
                argmax[oi] = int(std::size_t(c) * h * w) + best;
            }
        }
    }
}

void maxpool2_backward(const std::vector<double>& dout, const std::vector<int>& argmax,
                       std::size_t in_size, std::vector<double>& din) {
    din.assign(in_size, 0.0);
    for (std::size_t i = 0; i < dout.size(); ++i) din[argmax[i]] += dout[i];
}

double log_sum_exp(const std::vector<double>& v) {
    const double m = *std::max_element(v.begin(), v.end());
    double acc = 0.0;
    for (double x : v) acc += std::exp(x - m);
    return m + std::log(acc);
}

Tensor make_tensor(std::vector<std::uint32_t> dims) {
    Tensor t;
    t.dims = std::move(dims);
    t.data.assign(t.count(), 0.0f);
    return t;
}

void he_init(Tensor& t, int fan_in, Rng rng) {
    const double std = std::sqrt(2.0 / fan_in);
    for (float& v : t.data) v = float(rng.normal() * std);
}

void write_u32le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u16le(std::ostream& out, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

std::uint32_t read_u32le(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw WeightsError(WeightsError::Code::truncated, "weights: truncated");
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

std::uint16_t read_u16le(std::istream& in) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    if (in.gcount() != 2) throw WeightsError(WeightsError::Code::truncated, "weights: truncated");
    return std::uint16_t(b[0] | (b[1] << 8));
}

}  // namespace

std::vector<double> softmax(const std::vector<double>& logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        acc += p[i];
    }
    for (double& v : p) v /= acc;
    return p;
}

VictimModel VictimModel::make_linear(int channels, int height, int width, int num_classes,
                                     std::uint64_t init_seed) {
    VictimModel m;
    m.arch_ = Architecture::linear;
    m.channels_ = channels;
    m.height_ = height;
    m.width_ = width;
    m.num_classes_ = num_classes;
    const std::uint32_t d = std::uint32_t(channels) * height * width;
    Rng rng(init_seed);
    Tensor w = make_tensor({std::uint32_t(num_classes), d});
    he_init(w, int(d), rng.split(0));
    m.params_.emplace_back("fc.weight", std::move(w));
    m.params_.emplace_back("fc.bias", make_tensor({std::uint32_t(num_classes)}));
    return m;
}

VictimModel VictimModel::make_small_cnn(int channels, int height, int width, int num_classes,
                                        std::uint64_t init_seed) {
    VictimModel m;
    m.arch_ = Architecture::small_cnn;
    m.channels_ = channels;
    m.height_ = height;
    m.width_ = width;
    m.num_classes_ = num_classes;
    const int h4 = (height / 2) / 2, w4 = (width / 2) / 2;
    const std::uint32_t flat = std::uint32_t(16) * h4 * w4;
    Rng rng(init_seed);
    Tensor c1 = make_tensor({8, std::uint32_t(channels), 3, 3});
    he_init(c1, channels * 9, rng.split(0));
    Tensor c2 = make_tensor({16, 8, 3, 3});
    he_init(c2, 8 * 9, rng.split(1));
    Tensor fc = make_tensor({std::uint32_t(num_classes), flat});
    he_init(fc, int(flat), rng.split(2));
    m.params_.emplace_back("conv1.weight", std::move(c1));
    m.params_.emplace_back("conv1.bias", make_tensor({8}));
    m.params_.emplace_back("conv2.weight", std::move(c2));
    m.params_.emplace_back("conv2.bias", make_tensor({16}));
    m.params_.emplace_back("fc.weight", std::move(fc));
    m.params_.emplace_back("fc.bias", make_tensor({std::uint32_t(num_classes)}));
    return m;
}

void VictimModel::check_input(const ImageTensor& x) const {
    if (x.channels != channels_ || x.height != height_ || x.width != width_)
        throw std::invalid_argument("VictimModel: input shape mismatch");
}

const Tensor& VictimModel::param(const char* name) const {
    for (const auto& [n, t] : params_)
        if (n == name) return t;
    throw std::logic_error(std::string("VictimModel: no parameter ") + name);
}

Tensor& VictimModel::param(const char* name) {
    return const_cast<Tensor&>(const_cast<const VictimModel*>(this)->param(name));
}

std::vector<double> VictimModel::forward(const ImageTensor& x) const {
    check_input(x);
    if (arch_ == Architecture::linear) {
        const Tensor& w = param("fc.weight");
        const Tensor& b = param("fc.bias");
        std::vector<double> logits(num_classes_);
        const std::size_t d = x.size();
        for (int l = 0; l < num_classes_; ++l) {
            double acc = double(b.data[l]);
            const float* row = &w.data[std::size_t(l) * d];
            for (std::size_t i = 0; i < d; ++i) acc += double(row[i]) * x.data[i];
            logits[l] = acc;
        }
        return logits;
    }
    std::vector<double> a1, p1, a2, p2;
    std::vector<int> am1, am2;
    const int h = height_, w = width_;
    conv3x3_forward(x.data, param("conv1.weight").data.data(), param("conv1.bias").data.data(),
                    {channels_, h, w, 8}, a1);
    for (double& v : a1) v = relu(v);
    maxpool2_forward(a1, 8, h, w, p1, am1);
    const int h2 = h / 2, w2 = w / 2;
    conv3x3_forward(p1, param("conv2.weight").data.data(), param("conv2.bias").data.data(),
                    {8, h2, w2, 16}, a2);
    for (double& v : a2) v = relu(v);
    maxpool2_forward(a2, 16, h2, w2, p2, am2);
    const Tensor& fcw = param("fc.weight");
    const Tensor& fcb = param("fc.bias");
    std::vector<double> logits(num_classes_);
    for (int l = 0; l < num_classes_; ++l) {
        double acc = double(fcb.data[l]);
        const float* row = &fcw.data[std::size_t(l) * p2.size()];
        for (std::size_t i = 0; i < p2.size(); ++i) acc += double(row[i]) * p2[i];
        logits[l] = acc;
    }
    return logits;
}

double VictimModel::loss(const ImageTensor& x, int label) const {
    if (label < 0 || label >= num_classes_)
        throw std::invalid_argument("VictimModel: label out of range");
    const std::vector<double> logits = forward(x);
    return log_sum_exp(logits) - logits[label];
}

int VictimModel::predict(const ImageTensor& x) const {
    const std::vector<double> logits = forward(x);
    return int(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

double VictimModel::backward(const ImageTensor& x, int label,
                             std::vector<std::vector<double>>* param_grads,
                             ImageTensor* input_grad) const {
    check_input(x);
    if (label < 0 || label >= num_classes_)
        throw std::invalid_argument("VictimModel: label out of range");
    if (input_grad) gradient_evals_->fetch_add(1, std::memory_order_relaxed);

    if (arch_ == Architecture::linear) {
        const Tensor& w = param("fc.weight");
        const std::vector<double> logits = forward(x);
        const double loss_value = log_sum_exp(logits) - logits[label];
        std::vector<double> dl = softmax(logits);
        dl[label] -= 1.0;
        const std::size_t d = x.size();
        if (param_grads) {
            param_grads->assign(2, {});
            (*param_grads)[0].assign(std::size_t(num_classes_) * d, 0.0);
            (*param_grads)[1].assign(num_classes_, 0.0);
            for (int l = 0; l < num_classes_; ++l) {
                for (std::size_t i = 0; i < d; ++i)
                    (*param_grads)[0][std::size_t(l) * d + i] = dl[l] * x.data[i];
                (*param_grads)[1][l] = dl[l];
            }
        }
        if (input_grad) {
            *input_grad = ImageTensor(channels_, height_, width_);
            for (int l = 0; l < num_classes_; ++l) {
                const float* row = &w.data[std::size_t(l) * d];
                for (std::size_t i = 0; i < d; ++i) input_grad->data[i] += dl[l] * double(row[i]);
            }
        }
        return loss_value;
    }

    const int h = height_, wd = width_;
    const int h2 = h / 2, w2 = wd / 2;
    std::vector<double> a1, p1, a2, p2;
    std::vector<int> am1, am2;
    conv3x3_forward(x.data, param("conv1.weight").data.data(), param("conv1.bias").data.data(),
                    {channels_, h, wd, 8}, a1);
    std::vector<double> r1 = a1;
    for (double& v : r1) v = relu(v);
    maxpool2_forward(r1, 8, h, wd, p1, am1);
    conv3x3_forward(p1, param("conv2.weight").data.data(), param("conv2.bias").data.data(),
                    {8, h2, w2, 16}, a2);
    std::vector<double> r2 = a2;
    for (double& v : r2) v = relu(v);
    maxpool2_forward(r2, 16, h2, w2, p2, am2);

    const Tensor& fcw = param("fc.weight");
    const Tensor& fcb = param("fc.bias");
    std::vector<double> logits(num_classes_);
    for (int l = 0; l < num_classes_; ++l) {
        double acc = double(fcb.data[l]);
        const float* row = &fcw.data[std::size_t(l) * p2.size()];
        for (std::size_t i = 0; i < p2.size(); ++i) acc += double(row[i]) * p2[i];
        logits[l] = acc;
    }
    const double loss_value = log_sum_exp(logits) - logits[label];
    std::vector<double> dl = softmax(logits);
    dl[label] -= 1.0;

    std::vector<double> dz(p2.size(), 0.0);
    for (int l = 0; l < num_classes_; ++l) {
        const float* row = &fcw.data[std::size_t(l) * p2.size()];
        for (std::size_t i = 0; i < p2.size(); ++i) dz[i] += double(row[i]) * dl[l];
    }

    std::vector<double> dr2;
    maxpool2_backward(dz, am2, r2.size(), dr2);
    for (std::size_t i = 0; i < dr2.size(); ++i)
        if (a2[i] <= 0.0) dr2[i] = 0.0;

    std::vector<double> dw2, db2, dp1;
    conv3x3_backward(p1, param("conv2.weight").data.data(), {8, h2, w2, 16}, dr2,
                     param_grads ? &dw2 : nullptr, param_grads ? &db2 : nullptr, &dp1);

    std::vector<double> dr1;
    maxpool2_backward(dp1, am1, r1.size(), dr1);
    for (std::size_t i = 0; i < dr1.size(); ++i)
        if (a1[i] <= 0.0) dr1[i] = 0.0;

    std::vector<double> dw1, db1, dx;
    conv3x3_backward(x.data, param("conv1.weight").data.data(), {channels_, h, wd, 8}, dr1,
                     param_grads ? &dw1 : nullptr, param_grads ? &db1 : nullptr,
                     input_grad ? &dx : nullptr);

    if (param_grads) {
        param_grads->assign(6, {});
        (*param_grads)[0] = std::move(dw1);
        (*param_grads)[1] = std::move(db1);
        (*param_grads)[2] = std::move(dw2);
        (*param_grads)[3] = std::move(db2);
        (*param_grads)[4].assign(fcw.count(), 0.0);
        for (int l = 0; l < num_classes_; ++l)
            for (std::size_t i = 0; i < p2.size(); ++i)
                (*param_grads)[4][std::size_t(l) * p2.size() + i] = dl[l] * p2[i];
        (*param_grads)[5].assign(dl.begin(), dl.end());
    }
    if (input_grad) {
        *input_grad = ImageTensor(channels_, height_, width_);
        input_grad->data = std::move(dx);
    }
    return loss_value;
}

double VictimModel::loss_and_input_gradient(const ImageTensor& x, int label,
                                            ImageTensor& grad) const {
    return backward(x, label, nullptr, &grad);
}

ImageTensor VictimModel::input_gradient(const ImageTensor& x, int label) const {
    ImageTensor grad;
    backward(x, label, nullptr, &grad);
    return grad;
}

double accuracy(const VictimModel& model, const Dataset& data) {
    if (data.size() == 0) throw std::invalid_argument("accuracy: empty dataset");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (model.predict(data.images[i]) == data.labels[i]) ++correct;
    return double(correct) / double(data.size());
}

double train(VictimModel& model, const Dataset& data, const TrainConfig& cfg) {
    data.validate();
    if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be > 0");
    if (cfg.epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
    for (int l : data.labels)
        if (l >= model.num_classes()) throw std::invalid_argument("train: label out of range");

    const Rng base(cfg.rng_seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng = base.split(epoch);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(start + cfg.batch_size, order.size());
            std::vector<std::vector<double>> acc;
            for (std::size_t i = start; i < end; ++i) {
                std::vector<std::vector<double>> g;
                model.backward(data.images[order[i]], data.labels[order[i]], &g, nullptr);
                if (acc.empty()) {
                    acc = std::move(g);
                } else {
                    for (std::size_t t = 0; t < acc.size(); ++t)
                        for (std::size_t j = 0; j < acc[t].size(); ++j) acc[t][j] += g[t][j];
                }
            }
            const double scale = cfg.learning_rate / double(end - start);
            for (std::size_t t = 0; t < acc.size(); ++t) {
                Tensor& p = model.parameters()[t].second;
                for (std::size_t j = 0; j < acc[t].size(); ++j)
                    p.data[j] = float(double(p.data[j]) - scale * acc[t][j]);
            }
        }
    }
    return accuracy(model, data);
}

void save_weights(const VictimModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw WeightsError(WeightsError::Code::io, "weights: cannot write " + path);
    out.write(kMagic, 4);
    write_u32le(out, kVersion);

    // input shape rides along as an ordinary tensor so a file alone
    // reconstructs the model
    std::vector<std::pair<std::string, Tensor>> all;
    Tensor meta;
    meta.dims = {3};
    const auto shape = model.input_shape();
    meta.data = {float(shape[0]), float(shape[1]), float(shape[2])};
    all.emplace_back("meta.input_shape", std::move(meta));
    for (const auto& p : model.parameters()) all.push_back(p);

    write_u32le(out, std::uint32_t(all.size()));
    for (const auto& [name, t] : all) {
        write_u16le(out, std::uint16_t(name.size()));
        out.write(name.data(), std::streamsize(name.size()));
        const unsigned char ndim = static_cast<unsigned char>(t.dims.size());
        out.write(reinterpret_cast<const char*>(&ndim), 1);
        for (std::uint32_t d : t.dims) write_u32le(out, d);
        for (float v : t.data) {
            std::uint32_t bits;
            std::memcpy(&bits, &v, 4);
            write_u32le(out, bits);
        }
    }
    if (!out) throw WeightsError(WeightsError::Code::io, "weights: write failed for " + path);
}

VictimModel load_weights(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw WeightsError(WeightsError::Code::io, "weights: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw WeightsError(WeightsError::Code::bad_magic, "weights: bad magic in " + path);
    const std::uint32_t version = read_u32le(in);
    if (version != kVersion)
        throw WeightsError(WeightsError::Code::bad_version,
                           "weights: unsupported version " + std::to_string(version));
    const std::uint32_t count = read_u32le(in);
    std::vector<std::pair<std::string, Tensor>> tensors;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = read_u16le(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (in.gcount() != name_len)
            throw WeightsError(WeightsError::Code::truncated, "weights: truncated name");
        unsigned char ndim;
        in.read(reinterpret_cast<char*>(&ndim), 1);
        if (in.gcount() != 1)
            throw WeightsError(WeightsError::Code::truncated, "weights: truncated header");
        Tensor t;
        for (int d = 0; d < int(ndim); ++d) t.dims.push_back(read_u32le(in));
        t.data.resize(t.count());
        for (float& v : t.data) {
            const std::uint32_t bits = read_u32le(in);
            std::memcpy(&v, &bits, 4);
        }
        tensors.emplace_back(std::move(name), std::move(t));
    }

    auto find = [&](const std::string& name) -> const Tensor* {
        for (const auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    };
    const Tensor* meta = find("meta.input_shape");
    if (!meta || meta->data.size() != 3)
        throw WeightsError(WeightsError::Code::shape_mismatch, "weights: missing input shape");
    const int c = int(meta->data[0]), h = int(meta->data[1]), w = int(meta->data[2]);
    const Tensor* fcw = find("fc.weight");
    if (!fcw || fcw->dims.size() != 2)
        throw WeightsError(WeightsError::Code::shape_mismatch, "weights: missing fc.weight");
    const int classes = int(fcw->dims[0]);

    VictimModel model = find("conv1.weight") ? VictimModel::make_small_cnn(c, h, w, classes, 0)
                                             : VictimModel::make_linear(c, h, w, classes, 0);
    for (auto& [name, dst] : model.parameters()) {
        const Tensor* src = find(name);
        if (!src)
            throw WeightsError(WeightsError::Code::shape_mismatch, "weights: missing " + name);
        if (src->dims != dst.dims)
            throw WeightsError(WeightsError::Code::shape_mismatch,
                               "weights: shape mismatch for " + name);
        dst.data = src->data;
    }
    return model;
}

ImageTensor bit_depth_reduce(const ImageTensor& x, int bits) {
    if (bits < 1 || bits > 8) throw std::invalid_argument("bit_depth_reduce: bits must be 1..8");
    const double levels = double((1 << bits) - 1);
    ImageTensor out = x;
    for (double& v : out.data) v = std::round(v * levels) / levels;
    return out;
}

}  // namespace affina
