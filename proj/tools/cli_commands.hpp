#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace affina::cli {

// Raised for configuration problems (bad field values, missing files);
// the binary maps it to exit code 1, runtime failures to 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct RunConfig {
    // run
    std::string out_dir = "out";
    std::uint64_t seed = 7;
    unsigned jobs = 0;  // 0 = hardware parallelism

    // data: synthetic by default; IDX paths override when set
    int synth_per_class = 100;
    int image_size = 32;
    int corpus_size = 200;
    std::string train_images, train_labels, test_images, test_labels;

    // train
    int epochs = 30;
    int batch_size = 8;
    double learning_rate = 0.1;
    int augment_copies = 10;

    // transform distribution (degrees at the boundary; negative
    // translation bounds select the proportional 20px@299 default)
    double theta_max_deg = 30.0;
    double s_min = 0.5;
    double s_max = 1.5;
    double m_max = -1.0;
    double n_max = -1.0;

    // estimator
    std::string kernel = "gaussian";

    // attack
    double eps = 16.0 / 255.0;
    double alpha = 0.0;  // 0 = eps * 2.5 / steps
    int steps = 10;
    double mu = 1.0;
    double dim_prob = 0.7;
    double dim_min_scale = 0.9;
    bool random_init = true;
    std::string attack_name = "pgd";
    std::string hook_name = "identity";

    // eot
    int eot_samples = 50;
    int eot_steps = 50;
    int eot_corpus = 30;

    // io
    std::string model_path, model_b_path;
    std::string input_path, output_path, report_path;
    int label = -1;  // -1: use the model's own prediction

    // sweep / surface / ablate / oracle-check
    std::string sweep_kind = "all";
    std::vector<std::string> sweep_attacks = {"pgd", "ai-pgd", "dim", "ai-dim"};
    std::vector<double> surface_thetas = {-30, -20, -10, 0, 10, 20, 30};
    std::vector<double> surface_scales = {0.5, 0.75, 1.0, 1.25, 1.5};
    std::vector<int> ablate_sizes = {1, 3, 7, 15, 31};
    int ablate_transforms = 5;
    int oracle_images = 20;
    int oracle_samples = 200;
    std::vector<double> oracle_scales = {0.25, 0.5, 1.0};
    int gen_k1 = -1, gen_k2 = -1;  // explicit kernel half-sizes; -1 = derive
};

int cmd_train(const RunConfig& cfg);
int cmd_attack(const RunConfig& cfg);
int cmd_sweep(const RunConfig& cfg);
int cmd_surface(const RunConfig& cfg);
int cmd_oracle_check(const RunConfig& cfg);
int cmd_compare_eot(const RunConfig& cfg);
int cmd_ablate(const RunConfig& cfg);
int cmd_gen_kernels(const RunConfig& cfg);

}  // namespace affina::cli
