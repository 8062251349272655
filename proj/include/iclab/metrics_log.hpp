#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace iclab {

// One metric observation. Serialized as a single JSON object per line.
struct MetricsRow {
    int64_t step = 0;
    std::string metric;
    double value = 0.0;
    std::string kind;  // episode kind or "train"
    uint64_t seed = 0;
};

// Append-only JSONL writer. No timestamps anywhere: identical runs must
// produce byte-identical logs.
class MetricsLog {
public:
    // append = continue an interrupted run's file without a new header.
    MetricsLog(const std::string& path, bool append);

    void write_header(const std::string& header_json);
    void write_row(const MetricsRow& row);
    void flush();

    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::ofstream out_;
};

struct ParsedLog {
    std::string header_json;  // empty if none
    std::vector<MetricsRow> rows;
};

ParsedLog read_metrics_log(const std::string& path);

}  // namespace iclab
