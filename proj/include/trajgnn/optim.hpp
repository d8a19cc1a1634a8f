#pragma once

#include <functional>
#include <span>
#include <vector>

#include "trajgnn/tensor.hpp"

namespace trajgnn {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Bias-corrected Adam state. Moments are zero before the first step and the
/// step counter advances by exactly one per adam_step call.
struct AdamState {
    AdamConfig config;
    long step_count = 0;
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;

    static AdamState for_params(std::span<Param* const> params, AdamConfig config = {});
    bool initialized_for(std::span<Param* const> params) const;
};

/// One Adam update from the currently accumulated gradients. Gradients are
/// left untouched; call zero_grad_all explicitly between steps.
void adam_step(std::span<Param* const> params, AdamState& state);

void zero_grad_all(std::span<Param* const> params);

/// Scales all gradients so their joint L2 norm is at most max_norm.
/// Returns the pre-clip norm.
double clip_global_norm(std::span<Param* const> params, double max_norm);

/// Target for finite-difference gradient verification. `value` evaluates the
/// scalar objective at the params' current values; `value_and_grad` must also
/// accumulate analytic gradients into the params.
struct GradCheckTarget {
    std::vector<Param*> params;
    std::function<double()> value;
    std::function<double()> value_and_grad;
};

/// Compares accumulated analytic gradients against central differences and
/// returns max over entries of |analytic-numeric| / max(1e-8, |numeric|).
double finite_diff_check(const GradCheckTarget& target, double eps);

}  // namespace trajgnn
