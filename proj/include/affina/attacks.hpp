#pragma once

#include <cstdint>
#include <vector>

#include "affina/estimator.hpp"

namespace affina {

// L-infinity threat model settings. alpha <= 0 selects the default step
// size epsilon * 2.5 / steps.
struct AttackConfig {
    double epsilon = 16.0 / 255.0;
    double alpha = 0.0;
    int steps = 10;
    double momentum_mu = 1.0;
    double dim_probability = 0.7;
    double dim_min_scale = 0.9;
    bool random_init = true;
    std::uint64_t rng_seed = 0;

    double resolved_alpha() const { return alpha > 0.0 ? alpha : epsilon * 2.5 / steps; }
    void validate() const;
};

struct AdversarialResult {
    ImageTensor adversarial;
    double perturbation_linf = 0.0;
    int iterations_run = 0;
    std::vector<double> per_step_loss;
};

// One-step sign attack on the (estimator-enhanced) gradient at x.
AdversarialResult fgsm(const VictimModel& model, const ImageTensor& x, int label,
                       const AttackConfig& cfg, const EstimatorConfig& grad_hook);

// Iterative sign ascent with optional uniform random init, projected onto
// the eps-ball and [0,1] box every step. The identity hook is plain PGD;
// TI/AI hooks give TI-PGD / AI-PGD.
AdversarialResult pgd(const VictimModel& model, const ImageTensor& x, int label,
                      const AttackConfig& cfg, const EstimatorConfig& grad_hook);

// Momentum iterative method: accumulates L1-normalized enhanced gradients
// with decay momentum_mu. Starts at x (no random init).
AdversarialResult mim(const VictimModel& model, const ImageTensor& x, int label,
                      const AttackConfig& cfg, const EstimatorConfig& grad_hook);

// MIM with input diversity: with probability dim_probability the step
// gradient is taken at a randomly downscaled and padded input and mapped
// back through the adjoint of that resize-and-pad.
AdversarialResult dim(const VictimModel& model, const ImageTensor& x, int label,
                      const AttackConfig& cfg, const EstimatorConfig& grad_hook);

// Expectation-over-transformation baseline: each step ascends the sign of
// the sampled expected gradient (n_samples model gradients per update).
AdversarialResult eot_attack(const VictimModel& model, const ImageTensor& x, int label,
                             const AttackConfig& cfg, const TransformDistribution& d,
                             int n_samples);

enum class AttackKind { fgsm, pgd, mim, dim, eot };

AdversarialResult run_attack(AttackKind kind, const VictimModel& model, const ImageTensor& x,
                             int label, const AttackConfig& cfg, const EstimatorConfig& grad_hook,
                             const TransformDistribution& d, int eot_samples);

const char* attack_kind_name(AttackKind kind);

}  // namespace affina
