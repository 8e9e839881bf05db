#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

#include "cli_commands.hpp"

namespace {

using affina::cli::RunConfig;

void add_common(CLI::App* sub, RunConfig& cfg) {
    sub->add_option("--out", cfg.out_dir, "Output directory for all artifacts");
    sub->add_option("--seed", cfg.seed, "Global RNG seed");
    sub->add_option("--jobs", cfg.jobs, "Worker threads (0 = hardware parallelism)");
    sub->add_option("--image-size", cfg.image_size, "Synthetic image side length");
    sub->add_option("--synth-per-class", cfg.synth_per_class,
                    "Synthetic images per class (0 requires IDX paths)");
    sub->add_option("--corpus-size", cfg.corpus_size, "Evaluation corpus size");
    sub->add_option("--train-images", cfg.train_images, "IDX train image file");
    sub->add_option("--train-labels", cfg.train_labels, "IDX train label file");
    sub->add_option("--test-images", cfg.test_images, "IDX test image file");
    sub->add_option("--test-labels", cfg.test_labels, "IDX test label file");
    sub->add_option("--theta-max-deg", cfg.theta_max_deg, "Rotation range (degrees)");
    sub->add_option("--s-min", cfg.s_min, "Scale range lower bound");
    sub->add_option("--s-max", cfg.s_max, "Scale range upper bound");
    sub->add_option("--m-max", cfg.m_max, "x translation bound in pixels (<0: 20px@299 scaled)");
    sub->add_option("--n-max", cfg.n_max, "y translation bound in pixels (<0: 20px@299 scaled)");
    sub->add_option("--kernel", cfg.kernel, "Kernel kind: gaussian or uniform");
    sub->add_option("--eps", cfg.eps, "L-inf budget in [0,1] intensity units");
    sub->add_option("--alpha", cfg.alpha, "Step size (0 = eps*2.5/steps)");
    sub->add_option("--steps", cfg.steps, "Iteration count");
    sub->add_option("--mu", cfg.mu, "Momentum decay factor");
    sub->add_option("--dim-prob", cfg.dim_prob, "DIM transformation probability");
    sub->add_option("--dim-min-scale", cfg.dim_min_scale, "DIM resize lower bound");
    sub->add_flag("--random-init,!--no-random-init", cfg.random_init, "PGD random start");
    sub->add_option("--eot-samples", cfg.eot_samples, "EOT samples per update");
    sub->add_option("--eot-steps", cfg.eot_steps, "EOT optimization steps");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"affina: affine-invariant gradient estimation and attacks"};
    app.require_subcommand(1);
    app.set_config("--config", "", "INI config file; sections match subcommands");

    RunConfig cfg;

    CLI::App* train = app.add_subcommand("train", "Train victim models A and B");
    add_common(train, cfg);
    train->add_option("--epochs", cfg.epochs, "Training epochs");
    train->add_option("--batch-size", cfg.batch_size, "Mini-batch size");
    train->add_option("--learning-rate", cfg.learning_rate, "SGD learning rate");
    train->add_option("--augment-copies", cfg.augment_copies,
                      "Warped copies per train image (0 disables augmentation)");

    CLI::App* attack = app.add_subcommand("attack", "Craft one adversarial image");
    add_common(attack, cfg);
    attack->add_option("--attack", cfg.attack_name, "fgsm, pgd, mim, dim or eot");
    attack->add_option("--hook", cfg.hook_name, "Gradient hook: identity, ti or ai");
    attack->add_option("--model", cfg.model_path, "Weight file");
    attack->add_option("--in", cfg.input_path, "Input image (PGM/PPM)");
    attack->add_option("--out-image", cfg.output_path, "Output image (PGM/PPM)");
    attack->add_option("--report", cfg.report_path, "Report JSON path");
    attack->add_option("--label", cfg.label, "True label (-1: model prediction)");

    CLI::App* sweep = app.add_subcommand("sweep", "ASR sweeps over transformation grids");
    add_common(sweep, cfg);
    sweep->add_option("--model", cfg.model_path, "Source (white-box) weight file");
    sweep->add_option("--model-b", cfg.model_b_path, "Transfer model weight file");
    sweep->add_option("--kind", cfg.sweep_kind, "rotation, scaling, translation or all");
    sweep->add_option("--attacks", cfg.sweep_attacks,
                      "Attack specs, e.g. pgd ai-pgd ti-dim eot");

    CLI::App* surface = app.add_subcommand("surface", "ASR surface over theta x scale");
    add_common(surface, cfg);
    surface->add_option("--model", cfg.model_path, "Weight file");
    surface->add_option("--attack", cfg.attack_name, "Base attack");
    surface->add_option("--hook", cfg.hook_name, "Gradient hook");
    surface->add_option("--thetas", cfg.surface_thetas, "Rotation grid (degrees)");
    surface->add_option("--scales", cfg.surface_scales, "Scale grid");

    CLI::App* oracle = app.add_subcommand("oracle-check", "g1/g2 approximation statistics");
    add_common(oracle, cfg);
    oracle->add_option("--model", cfg.model_path, "Weight file");
    oracle->add_option("--oracle-images", cfg.oracle_images, "Corpus size");
    oracle->add_option("--oracle-samples", cfg.oracle_samples, "Monte-Carlo samples");
    oracle->add_option("--oracle-scales", cfg.oracle_scales, "Distribution width factors");

    CLI::App* cmpeot = app.add_subcommand("compare-eot", "AI-DIM vs EOT cost and ASR");
    add_common(cmpeot, cfg);
    cmpeot->add_option("--model", cfg.model_path, "Source weight file");
    cmpeot->add_option("--model-b", cfg.model_b_path, "Transfer model weight file");
    cmpeot->add_option("--eot-corpus", cfg.eot_corpus, "Images to craft per method");

    CLI::App* ablate = app.add_subcommand("ablate", "Kernel kind x size ablation");
    add_common(ablate, cfg);
    ablate->add_option("--model", cfg.model_path, "Weight file");
    ablate->add_option("--attack", cfg.attack_name, "Base attack for the ablation");
    ablate->add_option("--sizes", cfg.ablate_sizes, "Odd kernel sizes");
    ablate->add_option("--transforms", cfg.ablate_transforms, "Sampled transforms per cell");

    CLI::App* genk = app.add_subcommand("gen-kernels", "Dump kernel weights as CSV");
    add_common(genk, cfg);
    genk->add_option("--k1", cfg.gen_k1, "Explicit row half-size (overrides derivation)");
    genk->add_option("--k2", cfg.gen_k2, "Explicit column half-size");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;  // validation failure
    }

    // precedence: flags > AFFINA_SEED > config file > default
    if (const char* env_seed = std::getenv("AFFINA_SEED")) {
        bool seed_flag = false;
        for (int i = 1; i < argc; ++i)
            if (std::strncmp(argv[i], "--seed", 6) == 0) seed_flag = true;
        if (!seed_flag) cfg.seed = std::strtoull(env_seed, nullptr, 10);
    }

    try {
        if (train->parsed()) return affina::cli::cmd_train(cfg);
        if (attack->parsed()) return affina::cli::cmd_attack(cfg);
        if (sweep->parsed()) return affina::cli::cmd_sweep(cfg);
        if (surface->parsed()) return affina::cli::cmd_surface(cfg);
        if (oracle->parsed()) return affina::cli::cmd_oracle_check(cfg);
        if (cmpeot->parsed()) return affina::cli::cmd_compare_eot(cfg);
        if (ablate->parsed()) return affina::cli::cmd_ablate(cfg);
        if (genk->parsed()) return affina::cli::cmd_gen_kernels(cfg);
    } catch (const affina::cli::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}
