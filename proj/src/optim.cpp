#include "iclab/optim.hpp"

#include <cmath>

#include "iclab/errors.hpp"

namespace iclab {

double lr_at(int64_t step, const LrSchedule& sched) {
    if (step < 0) {
        throw ConfigError("lr_at: negative step");
    }
    const double max_lr = sched.max_lr;
    const int64_t warmup = sched.warmup_steps;
    if (warmup == 0) {
        // No warmup: constant max_lr, decaying from step 1 on.
        return step <= 1 ? max_lr : max_lr * std::sqrt(1.0 / static_cast<double>(step));
    }
    if (step <= warmup) {
        return max_lr * static_cast<double>(step) / static_cast<double>(warmup);
    }
    return max_lr * std::sqrt(static_cast<double>(warmup) / static_cast<double>(step));
}

void adam_step(ParamMap& params, const GradMap& grads, AdamState& state, double lr) {
    if (lr < 0.0) {
        throw ConfigError("adam_step: negative learning rate");
    }
    for (const auto& [name, g] : grads) {
        auto it = params.find(name);
        if (it == params.end()) {
            throw ConfigError("adam_step: gradient for unknown parameter '" + name + "'");
        }
        if (!it->second.same_shape(g)) {
            throw ConfigError("adam_step: shape mismatch for '" + name + "': " +
                              it->second.shape_str() + " vs " + g.shape_str());
        }
        if (!g.all_finite()) {
            throw NumericError("adam_step: non-finite gradient for '" + name + "', step aborted");
        }
    }
    state.t += 1;
    const double b1 = state.cfg.beta1, b2 = state.cfg.beta2, eps = state.cfg.eps;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    for (auto& [name, p] : params) {
        auto git = grads.find(name);
        if (git == grads.end()) {
            continue;  // no gradient this step: parameter (and its moments) stay put
        }
        const Tensor& g = git->second;
        Tensor& m = state.m.try_emplace(name, Tensor::zeros(p.shape)).first->second;
        Tensor& v = state.v.try_emplace(name, Tensor::zeros(p.shape)).first->second;
        for (size_t i = 0; i < p.data.size(); ++i) {
            const double gi = g.data[i];
            m.data[i] = b1 * m.data[i] + (1.0 - b1) * gi;
            v.data[i] = b2 * v.data[i] + (1.0 - b2) * gi * gi;
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            p.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

}  // namespace iclab
