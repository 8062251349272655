#pragma once

#include <cstdint>
#include <string>

#include "iclab/optim.hpp"
#include "iclab/tape.hpp"

namespace iclab {

// Versioned binary checkpoint: header (magic, version, config digest, step),
// then named parameter tensors as 64-bit little-endian floats, then Adam
// moments in the same order plus the step counter. Bit-exact across
// platforms of the same endianness.
struct Checkpoint {
    uint64_t config_digest = 0;
    int64_t step = 0;
    ParamMap params;
    AdamState adam;
    // Running train-metric accumulators, so a resume mid-window reproduces
    // the next train/loss row exactly.
    double loss_accum = 0.0;
    double acc_accum = 0.0;
    int64_t accum_n = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace iclab
