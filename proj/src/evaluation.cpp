#include "affina/evaluation.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "affina/parallel.hpp"

namespace affina {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

AsrDetail asr_detailed(const Classifier& classify, const Dataset& ds,
                       const std::vector<ImageTensor>& adversarials,
                       const AffineParams& transform) {
    if (ds.size() != adversarials.size())
        throw std::invalid_argument("asr: dataset/adversarial count mismatch");
    AsrDetail detail;
    detail.clean_correct.assign(ds.size(), 0);
    detail.adv_fooled.assign(ds.size(), 0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const int clean_pred = classify(warp_affine(ds.images[i], transform));
        if (clean_pred != ds.labels[i]) continue;
        detail.clean_correct[i] = 1;
        const int adv_pred = classify(warp_affine(adversarials[i], transform));
        detail.adv_fooled[i] = (adv_pred != ds.labels[i]) ? 1 : 0;
    }
    AsrResult& r = detail.summary;
    r.n_total = int(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        r.m_count += detail.clean_correct[i];
        r.successes += (detail.clean_correct[i] && detail.adv_fooled[i]) ? 1 : 0;
    }
    if (r.m_count == 0)
        throw AsrUndefinedError("asr: no transformed clean image classified correctly (M = 0)");
    r.asr = double(r.successes) / double(r.m_count);
    return detail;
}

AsrResult asr(const Classifier& classify, const Dataset& ds,
              const std::vector<ImageTensor>& adversarials, const AffineParams& transform) {
    return asr_detailed(classify, ds, adversarials, transform).summary;
}

AsrResult asr(const VictimModel& model, const Dataset& ds,
              const std::vector<ImageTensor>& adversarials, const AffineParams& transform) {
    return asr([&](const ImageTensor& img) { return model.predict(img); }, ds, adversarials,
               transform);
}

const char* hook_kind_name(HookKind hook) {
    switch (hook) {
        case HookKind::identity: return "identity";
        case HookKind::ti: return "ti";
        case HookKind::ai: return "ai";
    }
    return "?";
}

EstimatorConfig build_hook(HookKind hook, const TransformDistribution& d, int height, int width,
                           KernelKind kind) {
    switch (hook) {
        case HookKind::identity:
            return EstimatorConfig::identity();
        case HookKind::ti: {
            const PolarGrid grid = PolarGrid::for_image(height, width);
            const DerivedKernelSizes s = derived_half_sizes(d, grid);
            return EstimatorConfig::ti(make_kernel(kind, s.cart_rows, s.cart_cols));
        }
        case HookKind::ai:
            return EstimatorConfig::for_distribution(d, height, width, kind);
    }
    throw std::logic_error("build_hook: bad hook");
}

EstimatorConfig build_fixed_hook(int half_size, int height, int width, KernelKind kind) {
    if (half_size == 0) return EstimatorConfig::identity();
    return EstimatorConfig::ai(make_kernel(kind, half_size, half_size),
                               make_kernel(kind, half_size, half_size),
                               PolarGrid::for_image(height, width));
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    return Rng(base).split(index).next_u64();
}

std::vector<ImageTensor> craft_adversarials(const VictimModel& source, const Dataset& ds,
                                            const AttackSpec& spec, const SweepOptions& opt) {
    if (ds.size() == 0) throw std::invalid_argument("craft_adversarials: empty dataset");
    const auto shape = source.input_shape();
    const EstimatorConfig hook =
        build_hook(spec.hook, opt.dist, shape[1], shape[2], opt.kernel_kind);
    std::vector<ImageTensor> advs(ds.size());
    parallel_for(ds.size(), opt.jobs, [&](std::size_t i) {
        AttackConfig cfg = spec.cfg;
        cfg.rng_seed = derive_seed(opt.seed, i);
        advs[i] = run_attack(spec.kind, source, ds.images[i], ds.labels[i], cfg, hook, opt.dist,
                             spec.eot_samples)
                      .adversarial;
    });
    return advs;
}

EvalReport sweep_transforms(const std::vector<EvalModel>& models, const Dataset& ds,
                            const std::vector<AttackSpec>& specs,
                            const std::vector<AffineParams>& grid, const SweepOptions& opt) {
    if (models.empty()) throw std::invalid_argument("sweep: no models");
    if (grid.empty()) throw std::invalid_argument("sweep: empty grid");
    EvalReport report;
    for (const AttackSpec& spec : specs) {
        const double t0 = now_seconds();
        const std::vector<ImageTensor> advs = craft_adversarials(*models[0].model, ds, spec, opt);
        report.timing_seconds.emplace_back(spec.name, (now_seconds() - t0) / double(ds.size()));
        for (const EvalModel& em : models) {
            for (const AffineParams& t : grid) {
                EvalEntry entry;
                entry.attack = spec.name;
                entry.hook = hook_kind_name(spec.hook);
                entry.model = em.name;
                entry.transform = t;
                entry.seed = opt.seed;
                try {
                    const AsrResult r = asr(*em.model, ds, advs, t);
                    entry.asr = r.asr;
                    entry.successes = r.successes;
                    entry.m_count = r.m_count;
                    entry.n_total = r.n_total;
                } catch (const AsrUndefinedError&) {
                    entry.valid = false;
                    entry.n_total = int(ds.size());
                }
                report.entries.push_back(entry);
            }
        }
    }
    return report;
}

std::vector<AffineParams> rotation_grid(const std::vector<double>& theta_deg) {
    std::vector<AffineParams> grid;
    for (double t : theta_deg) grid.push_back({t * kDegToRad, 1.0, 0.0, 0.0});
    return grid;
}

std::vector<AffineParams> scaling_grid(const std::vector<double>& scales, double theta_deg,
                                       double m, double n) {
    std::vector<AffineParams> grid;
    for (double s : scales) grid.push_back({theta_deg * kDegToRad, s, m, n});
    return grid;
}

std::vector<AffineParams> translation_grid(const std::vector<std::pair<double, double>>& offsets,
                                           double theta_deg, double s) {
    std::vector<AffineParams> grid;
    for (const auto& [m, n] : offsets) grid.push_back({theta_deg * kDegToRad, s, m, n});
    return grid;
}

double scale_translation_px(double px_at_299, int image_size) {
    return std::round(px_at_299 * double(image_size) / 299.0);
}

EvalReport sweep_rotation(const std::vector<EvalModel>& models, const Dataset& ds,
                          const std::vector<AttackSpec>& specs,
                          const std::vector<double>& theta_deg, const SweepOptions& opt) {
    return sweep_transforms(models, ds, specs, rotation_grid(theta_deg), opt);
}

EvalReport sweep_scaling(const std::vector<EvalModel>& models, const Dataset& ds,
                         const std::vector<AttackSpec>& specs, const std::vector<double>& scales,
                         const SweepOptions& opt) {
    const int size = ds.images.empty() ? 0 : ds.images[0].height;
    const double off = scale_translation_px(20.0, size);
    return sweep_transforms(models, ds, specs, scaling_grid(scales, 30.0, off, off), opt);
}

EvalReport sweep_translation(const std::vector<EvalModel>& models, const Dataset& ds,
                             const std::vector<AttackSpec>& specs,
                             const std::vector<std::pair<double, double>>& offsets_at_299,
                             const SweepOptions& opt) {
    const int size = ds.images.empty() ? 0 : ds.images[0].height;
    std::vector<std::pair<double, double>> offsets;
    for (const auto& [m, n] : offsets_at_299)
        offsets.emplace_back(scale_translation_px(m, size), scale_translation_px(n, size));
    return sweep_transforms(models, ds, specs, translation_grid(offsets, 25.0, 0.7), opt);
}

EvalReport surface_grid(const std::vector<EvalModel>& models, const Dataset& ds,
                        const AttackSpec& spec, const std::vector<double>& theta_deg,
                        const std::vector<double>& scales, const SweepOptions& opt) {
    std::vector<AffineParams> grid;
    for (double t : theta_deg)
        for (double s : scales) grid.push_back({t * kDegToRad, s, 0.0, 0.0});
    return sweep_transforms(models, ds, {spec}, grid, opt);
}

EotComparison compare_eot(const std::vector<EvalModel>& models, const Dataset& ds,
                          const AttackConfig& aidim_cfg, const AttackConfig& eot_cfg,
                          int eot_samples, const std::vector<AffineParams>& grid,
                          const SweepOptions& opt) {
    if (models.empty()) throw std::invalid_argument("compare_eot: no models");
    AttackSpec aidim{"ai-dim", AttackKind::dim, HookKind::ai, aidim_cfg, 0};
    AttackSpec eot{"eot", AttackKind::eot, HookKind::identity, eot_cfg, eot_samples};

    EotComparison cmp;
    const VictimModel& source = *models[0].model;

    // measured model-gradient count per update step, one probe image each
    const auto shape = source.input_shape();
    const EstimatorConfig ai_hook =
        build_hook(HookKind::ai, opt.dist, shape[1], shape[2], opt.kernel_kind);
    source.reset_gradient_evals();
    run_attack(AttackKind::dim, source, ds.images[0], ds.labels[0], aidim_cfg, ai_hook, opt.dist,
               0);
    cmp.aidim_grads_per_update = int(source.gradient_evals() / std::uint64_t(aidim_cfg.steps));
    source.reset_gradient_evals();
    run_attack(AttackKind::eot, source, ds.images[0], ds.labels[0], eot_cfg,
               EstimatorConfig::identity(), opt.dist, eot_samples);
    cmp.eot_grads_per_update = int(source.gradient_evals() / std::uint64_t(eot_cfg.steps));
    source.reset_gradient_evals();

    double t0 = now_seconds();
    const std::vector<ImageTensor> aidim_advs = craft_adversarials(source, ds, aidim, opt);
    cmp.aidim_seconds_per_image = (now_seconds() - t0) / double(ds.size());
    t0 = now_seconds();
    const std::vector<ImageTensor> eot_advs = craft_adversarials(source, ds, eot, opt);
    cmp.eot_seconds_per_image = (now_seconds() - t0) / double(ds.size());

    for (const AttackSpec& spec : {aidim, eot}) {
        const std::vector<ImageTensor>& advs =
            spec.kind == AttackKind::dim ? aidim_advs : eot_advs;
        for (const EvalModel& em : models) {
            for (const AffineParams& t : grid) {
                EvalEntry entry;
                entry.attack = spec.name;
                entry.hook = hook_kind_name(spec.hook);
                entry.model = em.name;
                entry.transform = t;
                entry.seed = opt.seed;
                try {
                    const AsrResult r = asr(*em.model, ds, advs, t);
                    entry.asr = r.asr;
                    entry.successes = r.successes;
                    entry.m_count = r.m_count;
                    entry.n_total = r.n_total;
                } catch (const AsrUndefinedError&) {
                    entry.valid = false;
                    entry.n_total = int(ds.size());
                }
                cmp.report.entries.push_back(entry);
            }
        }
    }
    cmp.report.timing_seconds.emplace_back("ai-dim", cmp.aidim_seconds_per_image);
    cmp.report.timing_seconds.emplace_back("eot", cmp.eot_seconds_per_image);
    return cmp;
}

EvalReport ablate_kernel(const EvalModel& model, const Dataset& ds,
                         const std::vector<KernelKind>& kinds, const std::vector<int>& sizes,
                         int n_transforms, AttackKind base_attack, const AttackConfig& cfg,
                         const SweepOptions& opt) {
    for (int s : sizes)
        if (s < 1 || s % 2 == 0)
            throw std::invalid_argument("ablate_kernel: kernel sizes must be odd and >= 1");
    if (n_transforms < 1) throw std::invalid_argument("ablate_kernel: n_transforms must be >= 1");

    // fixed transform sample set shared by every (kind, size) cell
    std::vector<AffineParams> transforms;
    const Rng base(opt.seed ^ 0xab1a7eULL);
    for (int i = 0; i < n_transforms; ++i) {
        Rng stream = base.split(i);
        transforms.push_back(sample_transform(opt.dist, stream));
    }

    const auto shape = model.model->input_shape();
    EvalReport report;
    for (KernelKind kind : kinds) {
        for (int size : sizes) {
            const int half = (size - 1) / 2;
            const EstimatorConfig hook = build_fixed_hook(half, shape[1], shape[2], kind);
            std::vector<ImageTensor> advs(ds.size());
            const double t0 = now_seconds();
            parallel_for(ds.size(), opt.jobs, [&](std::size_t i) {
                AttackConfig acfg = cfg;
                acfg.rng_seed = derive_seed(opt.seed, i);  // independent of kind and size
                advs[i] = run_attack(base_attack, *model.model, ds.images[i], ds.labels[i], acfg,
                                     hook, opt.dist, 0)
                              .adversarial;
            });
            std::string hook_name = "identity";
            if (half > 0)
                hook_name = std::string("ai-") +
                            (kind == KernelKind::gaussian ? "gaussian" : "uniform") + "-" +
                            std::to_string(size);
            report.timing_seconds.emplace_back(hook_name, (now_seconds() - t0) / double(ds.size()));
            for (const AffineParams& t : transforms) {
                EvalEntry entry;
                entry.attack = attack_kind_name(base_attack);
                entry.hook = hook_name;
                entry.model = model.name;
                entry.transform = t;
                entry.seed = opt.seed;
                try {
                    const AsrResult r = asr(*model.model, ds, advs, t);
                    entry.asr = r.asr;
                    entry.successes = r.successes;
                    entry.m_count = r.m_count;
                    entry.n_total = r.n_total;
                } catch (const AsrUndefinedError&) {
                    entry.valid = false;
                    entry.n_total = int(ds.size());
                }
                report.entries.push_back(entry);
            }
        }
    }
    return report;
}

PairedDirectional paired_compare(const VictimModel& model, const Dataset& ds,
                                 const std::vector<ImageTensor>& advs_a,
                                 const std::vector<ImageTensor>& advs_b,
                                 const std::vector<AffineParams>& grid) {
    PairedDirectional out;
    double asr_a_sum = 0.0, asr_b_sum = 0.0;
    int valid_cells = 0;
    for (const AffineParams& t : grid) {
        AsrDetail da, db;
        try {
            auto classify = [&](const ImageTensor& img) { return model.predict(img); };
            da = asr_detailed(classify, ds, advs_a, t);
            db = asr_detailed(classify, ds, advs_b, t);
        } catch (const AsrUndefinedError&) {
            continue;  // skip M = 0 cells
        }
        ++valid_cells;
        asr_a_sum += da.summary.asr;
        asr_b_sum += db.summary.asr;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if (!da.clean_correct[i]) continue;  // same M set for both attacks
            ++out.evaluated;
            if (da.adv_fooled[i] && !db.adv_fooled[i]) ++out.wins;
            if (!da.adv_fooled[i] && db.adv_fooled[i]) ++out.losses;
        }
    }
    if (valid_cells > 0) {
        out.mean_asr_a = asr_a_sum / valid_cells;
        out.mean_asr_b = asr_b_sum / valid_cells;
    }
    return out;
}

std::string report_csv(const EvalReport& report) {
    std::string out = "attack,hook,model,theta_deg,s,m,n,asr,successes,m_count,n_total,seed\n";
    for (const EvalEntry& e : report.entries) {
        out += e.attack + "," + e.hook + "," + e.model + ",";
        out += format_double(e.transform.theta / kDegToRad) + ",";
        out += format_double(e.transform.s) + ",";
        out += format_double(e.transform.m) + ",";
        out += format_double(e.transform.n) + ",";
        out += e.valid ? format_double(e.asr) : std::string("nan");
        out += "," + std::to_string(e.successes) + "," + std::to_string(e.m_count) + "," +
               std::to_string(e.n_total) + "," + std::to_string(e.seed) + "\n";
    }
    return out;
}

void write_report_csv(const EvalReport& report, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("report: cannot write " + tmp);
        out << report_csv(report);
        if (!out) throw std::runtime_error("report: write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("report: rename failed for " + path);
}

std::uint64_t report_hash(const EvalReport& report) {
    const std::string csv = report_csv(report);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : csv) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace affina
