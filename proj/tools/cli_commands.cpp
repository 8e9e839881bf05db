#include "cli_commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "affina/estimator.hpp"
#include "affina/evaluation.hpp"
#include "affina/parallel.hpp"

namespace affina::cli {

namespace {

using nlohmann::json;

constexpr double kDegToRad = std::numbers::pi / 180.0;

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

void ensure_out_dir(const RunConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
    return (std::filesystem::path(cfg.out_dir) / name).string();
}

void atomic_write_text(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << text;
        if (!out) throw std::runtime_error("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("rename failed for " + path);
}

void require_file(const std::string& field, const std::string& path) {
    if (path.empty()) throw ConfigError(field + ": path is required");
    if (!std::filesystem::exists(path)) throw ConfigError(field + ": file not found: " + path);
}

KernelKind kernel_kind(const RunConfig& cfg) {
    if (cfg.kernel == "gaussian") return KernelKind::gaussian;
    if (cfg.kernel == "uniform") return KernelKind::uniform;
    throw ConfigError("estimator.kernel: expected gaussian or uniform, got " + cfg.kernel);
}

TransformDistribution make_dist(const RunConfig& cfg) {
    TransformDistribution d;
    d.theta_max = cfg.theta_max_deg * kDegToRad;
    d.s_min = cfg.s_min;
    d.s_max = cfg.s_max;
    d.m_max = cfg.m_max >= 0 ? cfg.m_max : scale_translation_px(20.0, cfg.image_size);
    d.n_max = cfg.n_max >= 0 ? cfg.n_max : scale_translation_px(20.0, cfg.image_size);
    try {
        d.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("dist: ") + e.what());
    }
    return d;
}

AttackConfig make_attack_config(const RunConfig& cfg) {
    AttackConfig a;
    a.epsilon = cfg.eps;
    a.alpha = cfg.alpha;
    a.steps = cfg.steps;
    a.momentum_mu = cfg.mu;
    a.dim_probability = cfg.dim_prob;
    a.dim_min_scale = cfg.dim_min_scale;
    a.random_init = cfg.random_init;
    a.rng_seed = cfg.seed;
    try {
        a.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("attack: ") + e.what());
    }
    return a;
}

AttackKind parse_attack_kind(const std::string& name) {
    if (name == "fgsm") return AttackKind::fgsm;
    if (name == "pgd") return AttackKind::pgd;
    if (name == "mim") return AttackKind::mim;
    if (name == "dim") return AttackKind::dim;
    if (name == "eot") return AttackKind::eot;
    throw ConfigError("attack: unknown attack " + name);
}

HookKind parse_hook(const std::string& name) {
    if (name == "identity") return HookKind::identity;
    if (name == "ti") return HookKind::ti;
    if (name == "ai") return HookKind::ai;
    throw ConfigError("hook: expected identity, ti or ai, got " + name);
}

// combined spec names for sweep lists: "pgd", "ti-pgd", "ai-dim", "eot"
AttackSpec parse_spec(const std::string& name, const RunConfig& cfg) {
    AttackSpec spec;
    spec.name = name;
    spec.cfg = make_attack_config(cfg);
    spec.eot_samples = cfg.eot_samples;
    std::string base = name;
    if (name.rfind("ai-", 0) == 0) {
        spec.hook = HookKind::ai;
        base = name.substr(3);
    } else if (name.rfind("ti-", 0) == 0) {
        spec.hook = HookKind::ti;
        base = name.substr(3);
    }
    spec.kind = parse_attack_kind(base);
    if (spec.kind == AttackKind::eot) {
        spec.hook = HookKind::identity;
        spec.cfg.steps = cfg.eot_steps;
    }
    return spec;
}

Dataset load_train_set(const RunConfig& cfg) {
    if (!cfg.train_images.empty() || !cfg.train_labels.empty()) {
        require_file("data.train_images", cfg.train_images);
        require_file("data.train_labels", cfg.train_labels);
        return load_idx(cfg.train_images, cfg.train_labels);
    }
    if (cfg.synth_per_class < 1)
        throw ConfigError("data.synth_per_class: need a positive count or IDX paths");
    return synth_shapes(cfg.synth_per_class, cfg.image_size, derive_seed(cfg.seed, 0xDA7A0));
}

Dataset load_test_corpus(const RunConfig& cfg, int count) {
    if (!cfg.test_images.empty() || !cfg.test_labels.empty()) {
        require_file("data.test_images", cfg.test_images);
        require_file("data.test_labels", cfg.test_labels);
        return load_idx(cfg.test_images, cfg.test_labels).subset(0, count);
    }
    if (cfg.synth_per_class < 1)
        throw ConfigError("data.synth_per_class: need a positive count or IDX paths");
    const int per_class = (count + 2) / 3;
    return synth_shapes(per_class, cfg.image_size, derive_seed(cfg.seed, 0xDA7A1))
        .subset(0, count);
}

VictimModel load_model(const std::string& field, const std::string& path) {
    require_file(field, path);
    return load_weights(path);
}

json config_snapshot(const RunConfig& cfg) {
    json j;
    j["run"] = {{"out", cfg.out_dir}, {"seed", cfg.seed}, {"jobs", cfg.jobs}};
    j["data"] = {{"synth_per_class", cfg.synth_per_class}, {"image_size", cfg.image_size},
                 {"corpus_size", cfg.corpus_size},         {"train_images", cfg.train_images},
                 {"train_labels", cfg.train_labels},       {"test_images", cfg.test_images},
                 {"test_labels", cfg.test_labels}};
    j["train"] = {{"epochs", cfg.epochs},
                  {"batch_size", cfg.batch_size},
                  {"learning_rate", cfg.learning_rate},
                  {"augment_copies", cfg.augment_copies}};
    j["dist"] = {{"theta_max_deg", cfg.theta_max_deg},
                 {"s_min", cfg.s_min},
                 {"s_max", cfg.s_max},
                 {"m_max", cfg.m_max},
                 {"n_max", cfg.n_max}};
    j["estimator"] = {{"kernel", cfg.kernel}};
    j["attack"] = {{"eps", cfg.eps},           {"alpha", cfg.alpha},
                   {"steps", cfg.steps},       {"mu", cfg.mu},
                   {"dim_prob", cfg.dim_prob}, {"dim_min_scale", cfg.dim_min_scale},
                   {"random_init", cfg.random_init}};
    j["eot"] = {{"samples", cfg.eot_samples},
                {"steps", cfg.eot_steps},
                {"corpus", cfg.eot_corpus}};
    return j;
}

json derived_snapshot(const RunConfig& cfg) {
    const TransformDistribution d = make_dist(cfg);
    const PolarGrid grid = PolarGrid::for_image(cfg.image_size, cfg.image_size);
    const DerivedKernelSizes s = derived_half_sizes(d, grid);
    json j;
    j["dist_radians"] = {{"theta_max", d.theta_max},
                         {"s_min", d.s_min},
                         {"s_max", d.s_max},
                         {"m_max", d.m_max},
                         {"n_max", d.n_max}};
    j["polar_grid"] = {{"radii", grid.radii}, {"angles", grid.angles}, {"r_max", grid.r_max}};
    j["kernel_half_sizes"] = {{"cart_rows", s.cart_rows},
                              {"cart_cols", s.cart_cols},
                              {"polar_rows", s.polar_rows},
                              {"polar_cols", s.polar_cols}};
    return j;
}

void write_metadata(const RunConfig& cfg, const std::string& command, json extra) {
    json j;
    j["command"] = command;
    j["config"] = config_snapshot(cfg);
    j["derived"] = derived_snapshot(cfg);
    j.update(extra);
    atomic_write_text(out_path(cfg, command + "_metadata.json"), j.dump(2) + "\n");
}

// full-precision decimal with a guaranteed decimal point
std::string format_weight(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    std::string s = buf;
    if (s.find('.') == std::string::npos && s.find('e') == std::string::npos &&
        s.find("inf") == std::string::npos && s.find("nan") == std::string::npos)
        s += ".0";
    return s;
}

std::string kernel_csv(const Kernel& k) {
    std::string out;
    for (int i = 0; i < k.rows(); ++i) {
        for (int j = 0; j < k.cols(); ++j) {
            if (j) out += ",";
            out += format_weight(k.weights[std::size_t(i) * k.cols() + j]);
        }
        out += "\n";
    }
    return out;
}

void save_weights_atomic(const VictimModel& m, const std::string& path) {
    const std::string tmp = path + ".tmp";
    save_weights(m, tmp);
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("rename failed for " + path);
}

std::vector<AffineParams> default_grid(const Dataset& ds) {
    const int size = ds.images.empty() ? 32 : ds.images[0].height;
    const double off = scale_translation_px(20.0, size);
    std::vector<AffineParams> grid = rotation_grid({-30, -15, 0, 15, 30});
    for (const AffineParams& p : scaling_grid({0.5, 0.7, 1.3, 1.5}, 30.0, off, off))
        grid.push_back(p);
    return grid;
}

}  // namespace

int cmd_train(const RunConfig& cfg) {
    ensure_out_dir(cfg);
    const Dataset base = load_train_set(cfg);
    const Dataset test_set = load_test_corpus(cfg, cfg.corpus_size);
    const TransformDistribution dist = make_dist(cfg);
    const Dataset train_set =
        cfg.augment_copies > 0
            ? augment_dataset(base, dist, cfg.augment_copies, derive_seed(cfg.seed, 0xDA7A2))
            : base;

    json summary;
    const auto shape = base.images.at(0);
    auto fit = [&](const char* name, std::uint64_t init_tag, std::uint64_t train_tag) {
        const double t0 = now_seconds();
        VictimModel m = VictimModel::make_small_cnn(shape.channels, shape.height, shape.width,
                                                    base.num_classes(),
                                                    derive_seed(cfg.seed, init_tag));
        const TrainConfig tc{cfg.epochs, cfg.batch_size, cfg.learning_rate,
                             derive_seed(cfg.seed, train_tag)};
        const double train_acc = train(m, train_set, tc);
        const double test_acc = accuracy(m, test_set);
        const std::string path = out_path(cfg, std::string(name) + ".aigw");
        save_weights_atomic(m, path);
        summary[name] = {{"train_acc", train_acc},
                         {"test_acc", test_acc},
                         {"seconds", now_seconds() - t0},
                         {"weights", path}};
        return m;
    };
    fit("model_a", 0xA0, 0xA1);
    fit("model_b", 0xB0, 0xB1);

    atomic_write_text(out_path(cfg, "train_summary.json"), summary.dump(2) + "\n");
    write_metadata(cfg, "train", {{"summary", summary}});
    std::printf("%s\n", summary.dump(2).c_str());
    return 0;
}

int cmd_attack(const RunConfig& cfg) {
    ensure_out_dir(cfg);
    const VictimModel model = load_model("attack.model", cfg.model_path);
    require_file("attack.in", cfg.input_path);
    const ImageTensor x = read_pnm(cfg.input_path);
    if (cfg.output_path.empty()) throw ConfigError("attack.out: path is required");

    const auto shape = model.input_shape();
    if (x.channels != shape[0] || x.height != shape[1] || x.width != shape[2])
        throw ConfigError("attack.in: image shape does not match the model input");

    const int label = cfg.label >= 0 ? cfg.label : model.predict(x);
    if (label >= model.num_classes()) throw ConfigError("attack.label: out of range");

    const TransformDistribution dist = make_dist(cfg);
    const AttackKind kind = parse_attack_kind(cfg.attack_name);
    const HookKind hook_kind = parse_hook(cfg.hook_name);
    const EstimatorConfig hook =
        build_hook(hook_kind, dist, shape[1], shape[2], kernel_kind(cfg));
    AttackConfig acfg = make_attack_config(cfg);
    if (kind == AttackKind::eot) acfg.steps = cfg.eot_steps;

    const AdversarialResult result =
        run_attack(kind, model, x, label, acfg, hook, dist, cfg.eot_samples);

    const std::string tmp = cfg.output_path + ".tmp";
    write_pnm(result.adversarial, tmp);
    if (std::rename(tmp.c_str(), cfg.output_path.c_str()) != 0)
        throw std::runtime_error("rename failed for " + cfg.output_path);

    json report;
    report["attack"] = cfg.attack_name;
    report["hook"] = cfg.hook_name;
    report["label"] = label;
    report["label_source"] = cfg.label >= 0 ? "flag" : "model_prediction";
    report["epsilon"] = acfg.epsilon;
    report["alpha"] = acfg.resolved_alpha();
    report["steps"] = acfg.steps;
    report["seed"] = acfg.rng_seed;
    report["perturbation_linf"] = result.perturbation_linf;
    report["iterations_run"] = result.iterations_run;
    report["per_step_loss"] = result.per_step_loss;
    report["prediction_before"] = model.predict(x);
    report["prediction_after"] = model.predict(result.adversarial);
    report["dim_gradient_mapping"] = "adjoint";  // gradient mapped back through
                                                 // the resize-and-pad transpose
    const std::string report_path =
        cfg.report_path.empty() ? out_path(cfg, "attack_report.json") : cfg.report_path;
    atomic_write_text(report_path, report.dump(2) + "\n");
    write_metadata(cfg, "attack", {{"report", report}});
    std::printf("%s\n", report.dump(2).c_str());
    return 0;
}

int cmd_sweep(const RunConfig& cfg) {
    ensure_out_dir(cfg);
    const VictimModel model_a = load_model("sweep.model", cfg.model_path);
    std::vector<VictimModel> extra;
    std::vector<EvalModel> models = {{"model-a", &model_a}};
    if (!cfg.model_b_path.empty()) {
        extra.push_back(load_model("sweep.model_b", cfg.model_b_path));
        models.push_back({"model-b", &extra.back()});
    }
    const Dataset corpus = load_test_corpus(cfg, cfg.corpus_size);
    SweepOptions opt{make_dist(cfg), kernel_kind(cfg), cfg.jobs, cfg.seed};
    std::vector<AttackSpec> specs;
    for (const std::string& name : cfg.sweep_attacks) specs.push_back(parse_spec(name, cfg));

    json files;
    auto run_one = [&](const std::string& kind) {
        EvalReport report;
        if (kind == "rotation")
            report = sweep_rotation(models, corpus, specs, {-30, -15, 0, 15, 30}, opt);
        else if (kind == "scaling")
            report = sweep_scaling(models, corpus, specs, {0.5, 0.7, 1.0, 1.3, 1.5}, opt);
        else if (kind == "translation")
            report = sweep_translation(models, corpus, specs, {{5, 5}, {20, 20}}, opt);
        else
            throw ConfigError("sweep.kind: expected rotation, scaling, translation or all");
        const std::string path = out_path(cfg, "sweep_" + kind + ".csv");
        write_report_csv(report, path);
        json timing;
        for (const auto& [name, sec] : report.timing_seconds) timing[name] = sec;
        files[kind] = {{"csv", path}, {"seconds_per_image", timing}};
    };
    if (cfg.sweep_kind == "all") {
        run_one("rotation");
        run_one("scaling");
        run_one("translation");
    } else {
        run_one(cfg.sweep_kind);
    }
    write_metadata(cfg, "sweep", {{"attacks", cfg.sweep_attacks}, {"outputs", files}});
    std::printf("%s\n", files.dump(2).c_str());
    return 0;
}

int cmd_surface(const RunConfig& cfg) {
    ensure_out_dir(cfg);
    const VictimModel model = load_model("surface.model", cfg.model_path);
    const Dataset corpus = load_test_corpus(cfg, cfg.corpus_size);
    SweepOptions opt{make_dist(cfg), kernel_kind(cfg), cfg.jobs, cfg.seed};
    const std::string spec_name =
        cfg.hook_name == "identity" ? cfg.attack_name : cfg.hook_name + "-" + cfg.attack_name;
    const AttackSpec spec = parse_spec(spec_name, cfg);
    const EvalReport report = surface_grid({{"model-a", &model}}, corpus, spec,
                                           cfg.surface_thetas, cfg.surface_scales, opt);
    const std::string path = out_path(cfg, "surface.csv");
    write_report_csv(report, path);
    write_metadata(cfg, "surface",
                   {{"attack", spec.name},
                    {"thetas_deg", cfg.surface_thetas},
                    {"scales", cfg.surface_scales},
                    {"csv", path}});
    std::printf("{\"csv\": \"%s\", \"cells\": %zu}\n", path.c_str(), report.entries.size());
    return 0;
}

int cmd_oracle_check(const RunConfig& cfg) {
    ensure_out_dir(cfg);
    const VictimModel model = load_model("oracle-check.model", cfg.model_path);
    const Dataset corpus = load_test_corpus(cfg, cfg.oracle_images);
    const TransformDistribution dist = make_dist(cfg);

    struct Row {
        std::size_t image_id;
        double scale;
        GradientStats stats;
    };
    std::vector<Row> rows(corpus.size() * cfg.oracle_scales.size());
    parallel_for(corpus.size(), cfg.jobs, [&](std::size_t i) {
        for (std::size_t s = 0; s < cfg.oracle_scales.size(); ++s) {
            const TransformDistribution scaled = dist.scaled(cfg.oracle_scales[s]);
            const GradientStats stats =
                compare_g1_g2(model, corpus.images[i], corpus.labels[i], scaled,
                              cfg.oracle_samples, Rng(derive_seed(cfg.seed, i)));
            rows[i * cfg.oracle_scales.size() + s] = {i, cfg.oracle_scales[s], stats};
        }
    });

    std::string csv = "image_id,dist_scale,l2_distance,cosine_similarity,g1_norm,g2_norm\n";
    char buf[256];
    for (const Row& r : rows) {
        std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,%.10g,%.10g,%.10g\n", r.image_id,
                      r.scale, r.stats.l2_distance, r.stats.cosine_similarity, r.stats.g1_norm,
                      r.stats.g2_norm);
        csv += buf;
    }
    const std::string path = out_path(cfg, "oracle_check.csv");
    atomic_write_text(path, csv);
    write_metadata(cfg, "oracle_check",
                   {{"images", corpus.size()},
                    {"samples", cfg.oracle_samples},
                    {"scales", cfg.oracle_scales},
                    {"csv", path}});
    std::printf("{\"csv\": \"%s\", \"rows\": %zu}\n", path.c_str(), rows.size());
    return 0;
}

int cmd_compare_eot(const RunConfig& cfg) {
    ensure_out_dir(cfg);
    const VictimModel model_a = load_model("compare-eot.model", cfg.model_path);
    std::vector<VictimModel> extra;
    std::vector<EvalModel> models = {{"model-a", &model_a}};
    if (!cfg.model_b_path.empty()) {
        extra.push_back(load_model("compare-eot.model_b", cfg.model_b_path));
        models.push_back({"model-b", &extra.back()});
    }
    const Dataset corpus = load_test_corpus(cfg, cfg.eot_corpus);
    SweepOptions opt{make_dist(cfg), kernel_kind(cfg), cfg.jobs, cfg.seed};

    AttackConfig aidim_cfg = make_attack_config(cfg);
    AttackConfig eot_cfg = make_attack_config(cfg);
    eot_cfg.steps = cfg.eot_steps;

    const EotComparison cmp = compare_eot(models, corpus, aidim_cfg, eot_cfg, cfg.eot_samples,
                                          rotation_grid({-30, -15, 0, 15, 30}), opt);
    const std::string path = out_path(cfg, "compare_eot.csv");
    write_report_csv(cmp.report, path);
    json timing = {{"eot_seconds_per_image", cmp.eot_seconds_per_image},
                   {"aidim_seconds_per_image", cmp.aidim_seconds_per_image},
                   {"eot_grads_per_update", cmp.eot_grads_per_update},
                   {"aidim_grads_per_update", cmp.aidim_grads_per_update}};
    write_metadata(cfg, "compare_eot", {{"timing", timing}, {"csv", path}});
    std::printf("%s\n", timing.dump(2).c_str());
    return 0;
}

int cmd_ablate(const RunConfig& cfg) {
    ensure_out_dir(cfg);
    const VictimModel model = load_model("ablate.model", cfg.model_path);
    const Dataset corpus = load_test_corpus(cfg, cfg.corpus_size);
    SweepOptions opt{make_dist(cfg), kernel_kind(cfg), cfg.jobs, cfg.seed};
    AttackConfig acfg = make_attack_config(cfg);
    const AttackKind base = parse_attack_kind(cfg.attack_name);
    const EvalReport report =
        ablate_kernel({"model-a", &model}, corpus, {KernelKind::gaussian, KernelKind::uniform},
                      cfg.ablate_sizes, cfg.ablate_transforms, base, acfg, opt);
    const std::string path = out_path(cfg, "ablate.csv");
    write_report_csv(report, path);
    write_metadata(cfg, "ablate",
                   {{"sizes", cfg.ablate_sizes},
                    {"transforms", cfg.ablate_transforms},
                    {"base_attack", cfg.attack_name},
                    {"csv", path}});
    std::printf("{\"csv\": \"%s\", \"cells\": %zu}\n", path.c_str(), report.entries.size());
    return 0;
}

int cmd_gen_kernels(const RunConfig& cfg) {
    ensure_out_dir(cfg);
    const KernelKind kind = kernel_kind(cfg);
    Kernel cart, polar;
    if (cfg.gen_k1 >= 0 || cfg.gen_k2 >= 0) {
        const int k1 = std::max(cfg.gen_k1, 0);
        const int k2 = std::max(cfg.gen_k2, 0);
        cart = make_kernel(kind, k1, k2);
        polar = make_kernel(kind, k1, k2);
    } else {
        const TransformDistribution dist = make_dist(cfg);
        const PolarGrid grid = PolarGrid::for_image(cfg.image_size, cfg.image_size);
        const DerivedKernelSizes s = derived_half_sizes(dist, grid);
        cart = make_kernel(kind, s.cart_rows, s.cart_cols);
        polar = make_kernel(kind, s.polar_rows, s.polar_cols);
    }
    const std::string cart_path = out_path(cfg, "kernel_t.csv");
    const std::string polar_path = out_path(cfg, "kernel_q.csv");
    atomic_write_text(cart_path, kernel_csv(cart));
    atomic_write_text(polar_path, kernel_csv(polar));
    write_metadata(cfg, "gen_kernels",
                   {{"kernel_t", {{"csv", cart_path},
                                  {"half_rows", cart.half_rows},
                                  {"half_cols", cart.half_cols}}},
                    {"kernel_q", {{"csv", polar_path},
                                  {"half_rows", polar.half_rows},
                                  {"half_cols", polar.half_cols}}}});
    std::printf("{\"kernel_t\": \"%s\", \"kernel_q\": \"%s\"}\n", cart_path.c_str(),
                polar_path.c_str());
    return 0;
}

}  // namespace affina::cli
