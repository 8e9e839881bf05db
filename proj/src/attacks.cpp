#include "affina/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace affina {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// project onto B_inf(origin, eps) intersected with the [0,1] box
void clip_project(ImageTensor& xt, const ImageTensor& origin, double eps) {
    for (std::size_t i = 0; i < xt.data.size(); ++i) {
        const double lo = std::max(0.0, origin.data[i] - eps);
        const double hi = std::min(1.0, origin.data[i] + eps);
        xt.data[i] = std::clamp(xt.data[i], lo, hi);
    }
}

AdversarialResult finalize(ImageTensor xt, const ImageTensor& origin, double eps, int iterations,
                           std::vector<double> losses) {
    AdversarialResult res;
    res.perturbation_linf = tensor_max_abs_diff(xt, origin);
    res.iterations_run = iterations;
    res.per_step_loss = std::move(losses);
    if (res.perturbation_linf > eps + 1e-9)
        throw std::logic_error("attack: perturbation exceeds epsilon budget");
    for (double v : xt.data)
        if (!(v >= 0.0 && v <= 1.0)) throw std::logic_error("attack: intensity outside [0,1]");
    res.adversarial = std::move(xt);
    return res;
}

}  // namespace

void AttackConfig::validate() const {
    if (!(epsilon > 0.0)) throw std::invalid_argument("AttackConfig: epsilon must be > 0");
    if (!(resolved_alpha() > 0.0)) throw std::invalid_argument("AttackConfig: alpha must be > 0");
    if (steps < 1) throw std::invalid_argument("AttackConfig: steps must be >= 1");
    if (dim_probability < 0.0 || dim_probability > 1.0)
        throw std::invalid_argument("AttackConfig: dim_probability must be in [0,1]");
    if (!(dim_min_scale > 0.0 && dim_min_scale <= 1.0))
        throw std::invalid_argument("AttackConfig: dim_min_scale must be in (0,1]");
    if (momentum_mu < 0.0) throw std::invalid_argument("AttackConfig: momentum_mu must be >= 0");
}

AdversarialResult fgsm(const VictimModel& model, const ImageTensor& x, int label,
                       const AttackConfig& cfg, const EstimatorConfig& grad_hook) {
    cfg.validate();
    ImageTensor grad;
    const double loss = model.loss_and_input_gradient(x, label, grad);
    const ImageTensor g = estimate(grad, grad_hook);
    ImageTensor xt = x;
    for (std::size_t i = 0; i < xt.data.size(); ++i)
        xt.data[i] = std::clamp(xt.data[i] + cfg.epsilon * sign(g.data[i]), 0.0, 1.0);
    return finalize(std::move(xt), x, cfg.epsilon, 1, {loss});
}

AdversarialResult pgd(const VictimModel& model, const ImageTensor& x, int label,
                      const AttackConfig& cfg, const EstimatorConfig& grad_hook) {
    cfg.validate();
    const double alpha = cfg.resolved_alpha();
    ImageTensor xt = x;
    if (cfg.random_init) {
        Rng init = Rng(cfg.rng_seed).split(0);
        for (double& v : xt.data) v += init.uniform(-cfg.epsilon, cfg.epsilon);
        clip_project(xt, x, cfg.epsilon);
    }
    std::vector<double> losses;
    for (int t = 0; t < cfg.steps; ++t) {
        ImageTensor grad;
        losses.push_back(model.loss_and_input_gradient(xt, label, grad));
        const ImageTensor g = estimate(grad, grad_hook);
        for (std::size_t i = 0; i < xt.data.size(); ++i) xt.data[i] += alpha * sign(g.data[i]);
        clip_project(xt, x, cfg.epsilon);
    }
    return finalize(std::move(xt), x, cfg.epsilon, cfg.steps, std::move(losses));
}

namespace {

// Shared MIM/DIM loop; step_gradient fills the raw gradient for the
// current iterate (DIM swaps in its resized-and-padded path there).
template <typename GradFn>
AdversarialResult momentum_attack(const ImageTensor& x, const AttackConfig& cfg,
                                  const EstimatorConfig& grad_hook, GradFn&& step_gradient) {
    cfg.validate();
    const double alpha = cfg.resolved_alpha();
    ImageTensor xt = x;
    ImageTensor g_acc(x.channels, x.height, x.width);
    std::vector<double> losses;
    for (int t = 0; t < cfg.steps; ++t) {
        ImageTensor grad;
        losses.push_back(step_gradient(xt, grad));
        const ImageTensor g = estimate(grad, grad_hook);
        double l1 = 0.0;
        for (double v : g.data) l1 += std::abs(v);
        for (std::size_t i = 0; i < g_acc.data.size(); ++i) {
            g_acc.data[i] *= cfg.momentum_mu;
            if (l1 > 0.0) g_acc.data[i] += g.data[i] / l1;
        }
        for (std::size_t i = 0; i < xt.data.size(); ++i) xt.data[i] += alpha * sign(g_acc.data[i]);
        clip_project(xt, x, cfg.epsilon);
    }
    return finalize(std::move(xt), x, cfg.epsilon, cfg.steps, std::move(losses));
}

}  // namespace

AdversarialResult mim(const VictimModel& model, const ImageTensor& x, int label,
                      const AttackConfig& cfg, const EstimatorConfig& grad_hook) {
    return momentum_attack(x, cfg, grad_hook, [&](const ImageTensor& xt, ImageTensor& grad) {
        return model.loss_and_input_gradient(xt, label, grad);
    });
}

AdversarialResult dim(const VictimModel& model, const ImageTensor& x, int label,
                      const AttackConfig& cfg, const EstimatorConfig& grad_hook) {
    Rng div_rng = Rng(cfg.rng_seed).split(1);
    const int h = x.height, w = x.width;
    auto step_gradient = [&](const ImageTensor& xt, ImageTensor& grad) -> double {
        const double coin = div_rng.uniform();
        if (coin >= cfg.dim_probability) return model.loss_and_input_gradient(xt, label, grad);
        const double sc = div_rng.uniform(cfg.dim_min_scale, 1.0);
        const int hp = std::max(1, int(std::lround(sc * h)));
        const int wp = std::max(1, int(std::lround(sc * w)));
        const int off_y = int(div_rng.uniform_index(std::uint64_t(h - hp + 1)));
        const int off_x = int(div_rng.uniform_index(std::uint64_t(w - wp + 1)));

        const ImageTensor resized = resize_bilinear(xt, hp, wp);
        ImageTensor padded(x.channels, h, w);
        for (int c = 0; c < x.channels; ++c)
            for (int y = 0; y < hp; ++y)
                for (int xx = 0; xx < wp; ++xx)
                    padded.at(c, y + off_y, xx + off_x) = resized.at(c, y, xx);

        ImageTensor diversified_grad;
        const double loss = model.loss_and_input_gradient(padded, label, diversified_grad);

        // map back through the adjoint of pad-then-resize
        ImageTensor cropped(x.channels, hp, wp);
        for (int c = 0; c < x.channels; ++c)
            for (int y = 0; y < hp; ++y)
                for (int xx = 0; xx < wp; ++xx)
                    cropped.at(c, y, xx) = diversified_grad.at(c, y + off_y, xx + off_x);
        grad = resize_bilinear_adjoint(cropped, h, w);
        return loss;
    };
    return momentum_attack(x, cfg, grad_hook, step_gradient);
}

AdversarialResult eot_attack(const VictimModel& model, const ImageTensor& x, int label,
                             const AttackConfig& cfg, const TransformDistribution& d,
                             int n_samples) {
    cfg.validate();
    if (n_samples < 1) throw std::invalid_argument("eot_attack: n_samples must be >= 1");
    const double alpha = cfg.resolved_alpha();
    const Rng base(cfg.rng_seed);
    ImageTensor xt = x;
    std::vector<double> losses;
    for (int t = 0; t < cfg.steps; ++t) {
        double mean_loss = 0.0;
        const ImageTensor g =
            eot_gradient(model, xt, label, d, n_samples, base.split(2 + t), &mean_loss);
        losses.push_back(mean_loss);
        for (std::size_t i = 0; i < xt.data.size(); ++i) xt.data[i] += alpha * sign(g.data[i]);
        clip_project(xt, x, cfg.epsilon);
    }
    return finalize(std::move(xt), x, cfg.epsilon, cfg.steps, std::move(losses));
}

AdversarialResult run_attack(AttackKind kind, const VictimModel& model, const ImageTensor& x,
                             int label, const AttackConfig& cfg, const EstimatorConfig& grad_hook,
                             const TransformDistribution& d, int eot_samples) {
    switch (kind) {
        case AttackKind::fgsm: return fgsm(model, x, label, cfg, grad_hook);
        case AttackKind::pgd: return pgd(model, x, label, cfg, grad_hook);
        case AttackKind::mim: return mim(model, x, label, cfg, grad_hook);
        case AttackKind::dim: return dim(model, x, label, cfg, grad_hook);
        case AttackKind::eot: return eot_attack(model, x, label, cfg, d, eot_samples);
    }
    throw std::logic_error("run_attack: bad kind");
}

const char* attack_kind_name(AttackKind kind) {
    switch (kind) {
        case AttackKind::fgsm: return "fgsm";
        case AttackKind::pgd: return "pgd";
        case AttackKind::mim: return "mim";
        case AttackKind::dim: return "dim";
        case AttackKind::eot: return "eot";
    }
    return "?";
}

}  // namespace affina
