#include "iclab/metrics.hpp"

#include <algorithm>
#include <set>

#include "iclab/errors.hpp"

namespace iclab {

EvalRecord make_record(const Episode& ep, std::span<const double> logits) {
    EvalRecord rec;
    rec.logits.assign(logits.begin(), logits.end());
    rec.target = ep.target;
    rec.kind = ep.kind;
    rec.query_rank = ep.query_rank;
    std::set<int> labels(ep.labels.begin(), ep.labels.end());
    rec.context_labels.assign(labels.begin(), labels.end());
    return rec;
}

std::vector<EvalRecord> make_records(std::span<const Episode> eps, const Tensor& logits) {
    if (logits.rank() != 2 || logits.dim(0) != static_cast<int64_t>(eps.size())) {
        throw ConfigError("make_records: logits shape " + logits.shape_str() + " vs " +
                          std::to_string(eps.size()) + " episodes");
    }
    const int64_t L = logits.dim(1);
    std::vector<EvalRecord> out;
    out.reserve(eps.size());
    for (size_t i = 0; i < eps.size(); ++i) {
        out.push_back(make_record(
            eps[i], std::span<const double>(logits.data.data() + static_cast<int64_t>(i) * L,
                                            static_cast<size_t>(L))));
    }
    return out;
}

namespace {

int64_t argmax_lowest(const std::vector<double>& v) {
    int64_t best = 0;
    for (int64_t i = 1; i < static_cast<int64_t>(v.size()); ++i) {
        if (v[static_cast<size_t>(i)] > v[static_cast<size_t>(best)]) {
            best = i;
        }
    }
    return best;
}

}  // namespace

AccuracySummary restricted_two_way_accuracy(std::span<const EvalRecord> records) {
    AccuracySummary out;
    out.metric = "restricted_two_way";
    double credit = 0.0;
    for (const EvalRecord& r : records) {
        if (r.context_labels.size() != 2) {
            throw ConfigError("restricted_two_way_accuracy: context label set size " +
                              std::to_string(r.context_labels.size()) + ", need exactly 2");
        }
        const int other =
            r.context_labels[0] == r.target ? r.context_labels[1] : r.context_labels[0];
        if (r.target >= static_cast<int>(r.logits.size()) ||
            other >= static_cast<int>(r.logits.size())) {
            throw ConfigError("restricted_two_way_accuracy: label beyond logit range");
        }
        const double lt = r.logits[static_cast<size_t>(r.target)];
        const double lo = r.logits[static_cast<size_t>(other)];
        if (lt > lo) {
            credit += 1.0;
        } else if (lt == lo) {
            credit += 0.5;
        }
    }
    out.n = static_cast<int64_t>(records.size());
    out.mean = out.n > 0 ? credit / static_cast<double>(out.n) : 0.0;
    return out;
}

AccuracySummary full_multiclass_accuracy(std::span<const EvalRecord> records) {
    AccuracySummary out;
    out.metric = "full_multiclass";
    int64_t correct = 0;
    for (const EvalRecord& r : records) {
        if (argmax_lowest(r.logits) == r.target) {
            ++correct;
        }
    }
    out.n = static_cast<int64_t>(records.size());
    out.mean = out.n > 0 ? static_cast<double>(correct) / static_cast<double>(out.n) : 0.0;
    return out;
}

AccuracySummary inweights_accuracy(std::span<const EvalRecord> records, QueryPool pool) {
    std::vector<EvalRecord> kept;
    for (const EvalRecord& r : records) {
        const bool in_pool = pool == QueryPool::all ||
                             (pool == QueryPool::common10 && r.query_rank >= 1 && r.query_rank <= 10) ||
                             (pool == QueryPool::rare && r.query_rank > 10);
        if (in_pool) {
            kept.push_back(r);
        }
    }
    if (kept.empty()) {
        throw ConfigError("inweights_accuracy: no records in the requested pool");
    }
    AccuracySummary out = full_multiclass_accuracy(kept);
    out.metric = pool == QueryPool::all ? "inweights_all"
                 : pool == QueryPool::common10 ? "inweights_common10"
                                               : "inweights_rare";
    return out;
}

AccuracySummary context_label_frequency(std::span<const EvalRecord> records) {
    AccuracySummary out;
    out.metric = "context_label_frequency";
    int64_t hits = 0;
    for (const EvalRecord& r : records) {
        const int64_t am = argmax_lowest(r.logits);
        if (std::find(r.context_labels.begin(), r.context_labels.end(), static_cast<int>(am)) !=
            r.context_labels.end()) {
            ++hits;
        }
    }
    out.n = static_cast<int64_t>(records.size());
    out.mean = out.n > 0 ? static_cast<double>(hits) / static_cast<double>(out.n) : 0.0;
    return out;
}

}  // namespace iclab
