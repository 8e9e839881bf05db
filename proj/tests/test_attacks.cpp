#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "affina/attacks.hpp"
#include "test_util.hpp"

using namespace affina;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

ImageTensor random_image(int h, int w, std::uint64_t seed) {
    ImageTensor img(1, h, w);
    Rng rng(seed);
    for (double& v : img.data) v = rng.uniform();
    return img;
}

VictimModel quick_model(int h, int w, std::uint64_t seed) {
    return VictimModel::make_small_cnn(1, h, w, 3, seed);
}

bool same_tensor(const ImageTensor& a, const ImageTensor& b) {
    return a.same_shape(b) && a.data == b.data;
}

}  // namespace

TEST_CASE("fgsm with a vanishing budget returns the input") {
    const VictimModel m = quick_model(16, 16, 1);
    const ImageTensor x = random_image(16, 16, 2);
    AttackConfig cfg;
    cfg.epsilon = 1e-9;
    const AdversarialResult r = fgsm(m, x, 0, cfg, EstimatorConfig::identity());
    CHECK(tensor_max_abs_diff(r.adversarial, x) <= 1e-9 * (1.0 + 1e-6));
}

TEST_CASE("fgsm on a linear model matches the closed form") {
    VictimModel m = VictimModel::make_linear(1, 6, 6, 3, 3);
    ImageTensor x(1, 6, 6);
    Rng rng(4);
    for (double& v : x.data) v = rng.uniform(0.3, 0.7);
    AttackConfig cfg;
    cfg.epsilon = 0.05;
    const int label = 1;
    const AdversarialResult r = fgsm(m, x, label, cfg, EstimatorConfig::identity());

    const auto probs = softmax(m.forward(x));
    const auto& w = m.parameters()[0].second;
    for (int i = 0; i < 36; ++i) {
        double g = 0.0;
        for (int l = 0; l < 3; ++l)
            g += double(w.data[std::size_t(l) * 36 + i]) * (probs[l] - (l == label ? 1 : 0));
        const double expected =
            std::clamp(x.data[i] + cfg.epsilon * (g > 0 ? 1.0 : (g < 0 ? -1.0 : 0.0)), 0.0, 1.0);
        CHECK(r.adversarial.data[i] == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("sign symmetry: negated gradients negate the perturbation") {
    VictimModel m = VictimModel::make_linear(1, 6, 6, 2, 5);
    VictimModel neg = m;
    // deep-copy parameters, then negate the weights
    neg.parameters() = m.parameters();
    for (float& v : neg.parameters()[0].second.data) v = -v;
    ImageTensor x(1, 6, 6);
    for (double& v : x.data) v = 0.5;  // keep clipping inactive
    AttackConfig cfg;
    cfg.epsilon = 0.1;
    const AdversarialResult a = fgsm(m, x, 0, cfg, EstimatorConfig::identity());
    const AdversarialResult b = fgsm(neg, x, 0, cfg, EstimatorConfig::identity());
    for (std::size_t i = 0; i < x.data.size(); ++i)
        CHECK(a.adversarial.data[i] - x.data[i] ==
              doctest::Approx(-(b.adversarial.data[i] - x.data[i])).epsilon(1e-12));
}

TEST_CASE("single-step pgd without init degenerates to fgsm") {
    const VictimModel m = quick_model(16, 16, 7);
    const ImageTensor x = random_image(16, 16, 8);
    AttackConfig cfg;
    cfg.epsilon = 0.06;
    cfg.alpha = cfg.epsilon;
    cfg.steps = 1;
    cfg.random_init = false;
    const EstimatorConfig hook =
        EstimatorConfig::for_distribution({20 * kDeg, 0.9, 1.1, 1.0, 1.0}, 16, 16);
    const AdversarialResult a = pgd(m, x, 2, cfg, hook);
    const AdversarialResult b = fgsm(m, x, 2, cfg, hook);
    CHECK(same_tensor(a.adversarial, b.adversarial));
}

TEST_CASE("pgd respects the budget and box on every result") {
    const VictimModel m = quick_model(16, 16, 9);
    const ImageTensor x = random_image(16, 16, 10);
    AttackConfig cfg;
    cfg.epsilon = 16.0 / 255.0;
    cfg.steps = 10;
    cfg.rng_seed = 11;
    const AdversarialResult r = pgd(m, x, 1, cfg, EstimatorConfig::identity());
    CHECK(r.perturbation_linf <= cfg.epsilon + 1e-9);
    for (double v : r.adversarial.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(r.iterations_run == 10);
    CHECK(r.per_step_loss.size() == 10);
}

TEST_CASE("pgd with the identity hook matches a hand-rolled base loop") {
    const VictimModel m = quick_model(12, 12, 12);
    const ImageTensor x = random_image(12, 12, 13);
    AttackConfig cfg;
    cfg.epsilon = 0.08;
    cfg.alpha = 0.02;
    cfg.steps = 6;
    cfg.random_init = false;
    const int label = 0;
    const AdversarialResult r = pgd(m, x, label, cfg, EstimatorConfig::identity());

    // independent reimplementation of the base update rule
    ImageTensor xt = x;
    for (int t = 0; t < cfg.steps; ++t) {
        const ImageTensor g = m.input_gradient(xt, label);
        for (std::size_t i = 0; i < xt.data.size(); ++i) {
            const double step = g.data[i] > 0 ? 1.0 : (g.data[i] < 0 ? -1.0 : 0.0);
            double v = xt.data[i] + cfg.alpha * step;
            v = std::min(v, std::min(1.0, x.data[i] + cfg.epsilon));
            v = std::max(v, std::max(0.0, x.data[i] - cfg.epsilon));
            xt.data[i] = v;
        }
    }
    CHECK(same_tensor(r.adversarial, xt));
}

TEST_CASE("pgd random init is deterministic per seed") {
    const VictimModel m = quick_model(16, 16, 14);
    const ImageTensor x = random_image(16, 16, 15);
    AttackConfig cfg;
    cfg.rng_seed = 77;
    const AdversarialResult a = pgd(m, x, 0, cfg, EstimatorConfig::identity());
    const AdversarialResult b = pgd(m, x, 0, cfg, EstimatorConfig::identity());
    CHECK(same_tensor(a.adversarial, b.adversarial));
    cfg.rng_seed = 78;
    const AdversarialResult c = pgd(m, x, 0, cfg, EstimatorConfig::identity());
    CHECK(!same_tensor(a.adversarial, c.adversarial));
}

TEST_CASE("mim with zero momentum matches pgd without init") {
    const VictimModel m = quick_model(16, 16, 16);
    const ImageTensor x = random_image(16, 16, 17);
    AttackConfig cfg;
    cfg.momentum_mu = 0.0;
    cfg.random_init = false;
    cfg.steps = 8;
    const EstimatorConfig hook = EstimatorConfig::ti(gaussian_kernel(1, 1));
    const AdversarialResult a = mim(m, x, 2, cfg, hook);
    const AdversarialResult b = pgd(m, x, 2, cfg, hook);
    CHECK(same_tensor(a.adversarial, b.adversarial));
    CHECK(a.per_step_loss == b.per_step_loss);
}

TEST_CASE("mim under a constant gradient walks to the box corner") {
    // saturated-softmax linear model keeps the gradient field constant
    VictimModel m = VictimModel::make_linear(1, 5, 5, 2, 18);
    Rng rng(19);
    for (float& v : m.parameters()[0].second.data) v = float(rng.uniform(-0.1, 0.1));
    m.parameters()[1].second.data[0] = 60.0f;
    m.parameters()[1].second.data[1] = -60.0f;
    ImageTensor x(1, 5, 5);
    for (double& v : x.data) v = 0.5;
    AttackConfig cfg;
    cfg.epsilon = 0.1;
    cfg.alpha = 0.02;
    cfg.steps = 10;
    cfg.momentum_mu = 1.0;
    const AdversarialResult r = mim(m, x, 1, cfg, EstimatorConfig::identity());
    const ImageTensor g = m.input_gradient(x, 1);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double expected = g.data[i] > 0 ? 0.6 : (g.data[i] < 0 ? 0.4 : 0.5);
        CHECK(r.adversarial.data[i] == doctest::Approx(expected).epsilon(1e-9));
    }
    CHECK(r.perturbation_linf <= cfg.epsilon + 1e-9);
}

TEST_CASE("dim reduces to mim when diversification is off or trivial") {
    const VictimModel m = quick_model(16, 16, 20);
    const ImageTensor x = random_image(16, 16, 21);
    AttackConfig cfg;
    cfg.steps = 5;
    cfg.rng_seed = 4;
    const EstimatorConfig hook = EstimatorConfig::identity();

    AttackConfig off = cfg;
    off.dim_probability = 0.0;
    CHECK(same_tensor(dim(m, x, 1, off, hook).adversarial, mim(m, x, 1, off, hook).adversarial));

    AttackConfig trivial = cfg;
    trivial.dim_probability = 1.0;
    trivial.dim_min_scale = 1.0;
    CHECK(same_tensor(dim(m, x, 1, trivial, hook).adversarial,
                      mim(m, x, 1, trivial, hook).adversarial));
}

TEST_CASE("dim is deterministic per seed") {
    const VictimModel m = quick_model(16, 16, 22);
    const ImageTensor x = random_image(16, 16, 23);
    AttackConfig cfg;
    cfg.steps = 6;
    cfg.rng_seed = 91;
    const AdversarialResult a = dim(m, x, 0, cfg, EstimatorConfig::identity());
    const AdversarialResult b = dim(m, x, 0, cfg, EstimatorConfig::identity());
    CHECK(same_tensor(a.adversarial, b.adversarial));
    CHECK(a.per_step_loss == b.per_step_loss);
}

TEST_CASE("eot with one sample and zero width matches pgd without init") {
    const VictimModel m = quick_model(16, 16, 24);
    const ImageTensor x = random_image(16, 16, 25);
    AttackConfig cfg;
    cfg.steps = 5;
    cfg.random_init = false;
    const TransformDistribution zero{0.0, 1.0, 1.0, 0.0, 0.0};
    const AdversarialResult a = eot_attack(m, x, 2, cfg, zero, 1);
    const AdversarialResult b = pgd(m, x, 2, cfg, EstimatorConfig::identity());
    CHECK(same_tensor(a.adversarial, b.adversarial));
    CHECK(a.per_step_loss == b.per_step_loss);
}

TEST_CASE("eot issues n_samples model gradients per update") {
    const VictimModel m = quick_model(16, 16, 26);
    const ImageTensor x = random_image(16, 16, 27);
    AttackConfig cfg;
    cfg.steps = 4;
    const TransformDistribution d{20 * kDeg, 0.9, 1.1, 1.0, 1.0};
    m.reset_gradient_evals();
    eot_attack(m, x, 0, cfg, d, 50);
    CHECK(m.gradient_evals() == std::uint64_t(50) * 4);
    m.reset_gradient_evals();
    pgd(m, x, 0, cfg, EstimatorConfig::identity());
    CHECK(m.gradient_evals() == 4);
}

TEST_CASE("eot respects the budget") {
    const VictimModel m = quick_model(16, 16, 28);
    const ImageTensor x = random_image(16, 16, 29);
    AttackConfig cfg;
    cfg.steps = 3;
    const TransformDistribution d{30 * kDeg, 0.8, 1.2, 1.0, 1.0};
    const AdversarialResult r = eot_attack(m, x, 1, cfg, d, 5);
    CHECK(r.perturbation_linf <= cfg.epsilon + 1e-9);
    for (double v : r.adversarial.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("config validation rejects bad ranges") {
    AttackConfig cfg;
    cfg.epsilon = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.steps = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.dim_probability = 1.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.dim_min_scale = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.alpha = 0.0;  // auto default is fine
    cfg.validate();
    CHECK(cfg.resolved_alpha() == doctest::Approx(cfg.epsilon * 2.5 / cfg.steps));
}
