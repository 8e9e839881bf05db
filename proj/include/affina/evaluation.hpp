#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "affina/attacks.hpp"
#include "affina/data_io.hpp"

namespace affina {

using Classifier = std::function<int(const ImageTensor&)>;

class AsrUndefinedError : public std::runtime_error {
public:
    explicit AsrUndefinedError(const std::string& msg) : std::runtime_error(msg) {}
};

struct AsrResult {
    double asr = 0.0;
    int successes = 0;
    int m_count = 0;  // correctly classified transformed cleans (the denominator)
    int n_total = 0;
};

struct AsrDetail {
    AsrResult summary;
    std::vector<std::uint8_t> clean_correct;  // per image
    std::vector<std::uint8_t> adv_fooled;     // per image; only meaningful where clean_correct
};

// ASR over correctly classified transformed cleans: adversarials are the
// crafted-on-untransformed examples, both sides warped by `transform`
// before classification. Throws AsrUndefinedError when no transformed
// clean is classified correctly.
AsrResult asr(const Classifier& classify, const Dataset& ds,
              const std::vector<ImageTensor>& adversarials, const AffineParams& transform);
AsrResult asr(const VictimModel& model, const Dataset& ds,
              const std::vector<ImageTensor>& adversarials, const AffineParams& transform);
AsrDetail asr_detailed(const Classifier& classify, const Dataset& ds,
                       const std::vector<ImageTensor>& adversarials,
                       const AffineParams& transform);

enum class HookKind { identity, ti, ai };
const char* hook_kind_name(HookKind hook);

EstimatorConfig build_hook(HookKind hook, const TransformDistribution& d, int height, int width,
                           KernelKind kind);
// Ablation hook: both kernels at the same half-size; half-size 0 bypasses
// the estimator entirely (identity).
EstimatorConfig build_fixed_hook(int half_size, int height, int width, KernelKind kind);

struct AttackSpec {
    std::string name;
    AttackKind kind = AttackKind::pgd;
    HookKind hook = HookKind::identity;
    AttackConfig cfg;
    int eot_samples = 50;
};

struct EvalModel {
    std::string name;
    const VictimModel* model = nullptr;
};

struct EvalEntry {
    std::string attack;
    std::string hook;
    std::string model;
    AffineParams transform;
    bool valid = true;  // false when M = 0 at this cell
    double asr = 0.0;
    int successes = 0;
    int m_count = 0;
    int n_total = 0;
    std::uint64_t seed = 0;
};

struct EvalReport {
    std::vector<EvalEntry> entries;
    // attack name -> seconds per crafted image (excluded from CSV)
    std::vector<std::pair<std::string, double>> timing_seconds;
    std::map<std::string, std::string> metadata;
};

struct SweepOptions {
    TransformDistribution dist;  // drives hook kernels and EOT sampling
    KernelKind kernel_kind = KernelKind::gaussian;
    unsigned jobs = 0;
    std::uint64_t seed = 7;
};

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

// Crafts one adversarial per dataset image on the source model.
// Per-image seeds derive from opt seed and the image index.
std::vector<ImageTensor> craft_adversarials(const VictimModel& source, const Dataset& ds,
                                            const AttackSpec& spec, const SweepOptions& opt);

// Crafts once per attack spec on models[0], then evaluates ASR for every
// (spec, model, grid point); M = 0 cells are marked invalid instead of
// aborting. Entry order is spec-major, model, then grid.
EvalReport sweep_transforms(const std::vector<EvalModel>& models, const Dataset& ds,
                            const std::vector<AttackSpec>& specs,
                            const std::vector<AffineParams>& grid, const SweepOptions& opt);

std::vector<AffineParams> rotation_grid(const std::vector<double>& theta_deg);
std::vector<AffineParams> scaling_grid(const std::vector<double>& scales, double theta_deg,
                                       double m, double n);
std::vector<AffineParams> translation_grid(const std::vector<std::pair<double, double>>& offsets,
                                           double theta_deg, double s);
// Pixel offsets in the paper are tied to 299x299 inputs; rescale them
// proportionally to the desk image size.
double scale_translation_px(double px_at_299, int image_size);

EvalReport sweep_rotation(const std::vector<EvalModel>& models, const Dataset& ds,
                          const std::vector<AttackSpec>& specs,
                          const std::vector<double>& theta_deg, const SweepOptions& opt);
EvalReport sweep_scaling(const std::vector<EvalModel>& models, const Dataset& ds,
                         const std::vector<AttackSpec>& specs, const std::vector<double>& scales,
                         const SweepOptions& opt);
EvalReport sweep_translation(const std::vector<EvalModel>& models, const Dataset& ds,
                             const std::vector<AttackSpec>& specs,
                             const std::vector<std::pair<double, double>>& offsets_at_299,
                             const SweepOptions& opt);

EvalReport surface_grid(const std::vector<EvalModel>& models, const Dataset& ds,
                        const AttackSpec& spec, const std::vector<double>& theta_deg,
                        const std::vector<double>& scales, const SweepOptions& opt);

struct EotComparison {
    EvalReport report;
    double eot_seconds_per_image = 0.0;
    double aidim_seconds_per_image = 0.0;
    int eot_grads_per_update = 0;
    int aidim_grads_per_update = 0;
};

// AI-DIM against the EOT baseline: per-image crafting time, measured
// model-gradient counts per update, and grid-averaged ASR for both.
EotComparison compare_eot(const std::vector<EvalModel>& models, const Dataset& ds,
                          const AttackConfig& aidim_cfg, const AttackConfig& eot_cfg,
                          int eot_samples, const std::vector<AffineParams>& grid,
                          const SweepOptions& opt);

// ASR per (kernel kind, kernel size) under a fixed transform sample set;
// sizes must be odd (2k+1). Size 1 bypasses the estimator.
EvalReport ablate_kernel(const EvalModel& model, const Dataset& ds,
                         const std::vector<KernelKind>& kinds, const std::vector<int>& sizes,
                         int n_transforms, AttackKind base_attack, const AttackConfig& cfg,
                         const SweepOptions& opt);

// Paired per-image directional comparison accumulated over a grid:
// wins = images where `a` fooled and `b` did not.
struct PairedDirectional {
    long wins = 0;
    long losses = 0;
    long evaluated = 0;
    double mean_asr_a = 0.0;
    double mean_asr_b = 0.0;
    double margin() const { return evaluated > 0 ? double(wins - losses) / evaluated : 0.0; }
};

PairedDirectional paired_compare(const VictimModel& model, const Dataset& ds,
                                 const std::vector<ImageTensor>& advs_a,
                                 const std::vector<ImageTensor>& advs_b,
                                 const std::vector<AffineParams>& grid);

// CSV, exact column order:
// attack,hook,model,theta_deg,s,m,n,asr,successes,m_count,n_total,seed
std::string report_csv(const EvalReport& report);
void write_report_csv(const EvalReport& report, const std::string& path);

// FNV-1a over the CSV text (timing never enters the CSV).
std::uint64_t report_hash(const EvalReport& report);

}  // namespace affina
