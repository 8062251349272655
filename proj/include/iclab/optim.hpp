#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "iclab/tape.hpp"
#include "iclab/tensor.hpp"

namespace iclab {

// Linear warmup to max_lr at warmup_steps, then inverse square root decay:
// lr(s) = max_lr * sqrt(warmup / s). Continuous at the boundary.
struct LrSchedule {
    double max_lr = 3e-4;
    int64_t warmup_steps = 4000;
};

double lr_at(int64_t step, const LrSchedule& sched);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard Adam with bias correction. One shared step counter; first/second
// moments per parameter, allocated lazily to match parameter shapes.
struct AdamState {
    AdamConfig cfg;
    int64_t t = 0;
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
};

// In-place update of `params`. Checks every gradient for NaN/Inf before
// touching any state; a bad gradient aborts the whole step.
void adam_step(ParamMap& params, const GradMap& grads, AdamState& state, double lr);

}  // namespace iclab
