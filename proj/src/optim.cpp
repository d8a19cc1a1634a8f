#include "trajgnn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace trajgnn {

AdamState AdamState::for_params(std::span<Param* const> params, AdamConfig config) {
    AdamState state;
    state.config = config;
    for (const Param* p : params) {
        state.first_moment.push_back(Tensor::zeros(p->value.shape));
        state.second_moment.push_back(Tensor::zeros(p->value.shape));
    }
    return state;
}

bool AdamState::initialized_for(std::span<Param* const> params) const {
    if (first_moment.size() != params.size()) return false;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!first_moment[i].same_shape(params[i]->value)) return false;
    }
    return true;
}

void adam_step(std::span<Param* const> params, AdamState& state) {
    if (!state.initialized_for(params)) {
        throw std::logic_error("adam_step: state not initialized for these parameters");
    }
    state.step_count += 1;
    const AdamConfig& c = state.config;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step_count));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Param& p = *params[i];
        Tensor& m = state.first_moment[i];
        Tensor& v = state.second_moment[i];
        for (std::size_t j = 0; j < p.value.numel(); ++j) {
            const double g = p.grad.data[j];
            m.data[j] = c.beta1 * m.data[j] + (1.0 - c.beta1) * g;
            v.data[j] = c.beta2 * v.data[j] + (1.0 - c.beta2) * g * g;
            const double mhat = m.data[j] / bc1;
            const double vhat = v.data[j] / bc2;
            p.value.data[j] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
        }
    }
}

void zero_grad_all(std::span<Param* const> params) {
    for (Param* p : params) p->zero_grad();
}

double clip_global_norm(std::span<Param* const> params, double max_norm) {
    double sq = 0.0;
    for (const Param* p : params) {
        for (double g : p->grad.data) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double scale = max_norm / norm;
        for (Param* p : params) {
            for (double& g : p->grad.data) g *= scale;
        }
    }
    return norm;
}

double finite_diff_check(const GradCheckTarget& target, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_check: eps must be positive");
    zero_grad_all(target.params);
    const double base = target.value_and_grad();
    if (!std::isfinite(base)) {
        throw std::runtime_error("finite_diff_check: non-finite objective");
    }
    std::vector<Tensor> analytic;
    analytic.reserve(target.params.size());
    for (const Param* p : target.params) analytic.push_back(p->grad);

    double max_rel = 0.0;
    for (std::size_t i = 0; i < target.params.size(); ++i) {
        Param& p = *target.params[i];
        for (std::size_t j = 0; j < p.value.numel(); ++j) {
            const double saved = p.value.data[j];
            p.value.data[j] = saved + eps;
            const double plus = target.value();
            p.value.data[j] = saved - eps;
            const double minus = target.value();
            p.value.data[j] = saved;
            if (!std::isfinite(plus) || !std::isfinite(minus)) {
                throw std::runtime_error("finite_diff_check: non-finite perturbed objective");
            }
            const double numeric = (plus - minus) / (2.0 * eps);
            const double rel = std::abs(analytic[i].data[j] - numeric) /
                               std::max(1e-8, std::abs(numeric));
            if (rel > max_rel) max_rel = rel;
        }
    }
    return max_rel;
}

}  // namespace trajgnn
