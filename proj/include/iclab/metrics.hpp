#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "iclab/seqgen.hpp"
#include "iclab/tensor.hpp"

namespace iclab {

// Everything a metric needs from one evaluated episode.
struct EvalRecord {
    std::vector<double> logits;      // length L
    int target = 0;
    std::vector<int> context_labels; // distinct labels present in the context
    EpisodeKind kind = EpisodeKind::fewshot_eval;
    int query_rank = 0;
};

EvalRecord make_record(const Episode& ep, std::span<const double> logits);

// Batched helper: logits (B, L) row-per-episode.
std::vector<EvalRecord> make_records(std::span<const Episode> eps, const Tensor& logits);

struct AccuracySummary {
    std::string metric;
    double mean = 0.0;
    double std_over_seeds = 0.0;  // filled by cross-seed aggregation, 0 here
    int64_t n = 0;
};

// Correct iff the target's logit beats the other context label's; ties score
// half. Records must be 2-way few-shot records.
AccuracySummary restricted_two_way_accuracy(std::span<const EvalRecord> records);

// Argmax over all L outputs, lowest index on ties.
AccuracySummary full_multiclass_accuracy(std::span<const EvalRecord> records);

// Multiclass accuracy over queries whose Zipf rank falls in the pool:
// common10 = ranks 1-10, rare = the rest, all = no filter.
AccuracySummary inweights_accuracy(std::span<const EvalRecord> records, QueryPool pool);

// Fraction of records whose global argmax lands on a context label.
AccuracySummary context_label_frequency(std::span<const EvalRecord> records);

}  // namespace iclab
