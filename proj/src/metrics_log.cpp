#include "iclab/metrics_log.hpp"

#include <json.hpp>

#include "iclab/errors.hpp"

namespace iclab {

using nlohmann::json;

MetricsLog::MetricsLog(const std::string& path, bool append)
    : path_(path), out_(path, append ? std::ios::app : std::ios::trunc) {
    if (!out_) {
        throw LoadError("cannot open metrics log for writing: " + path);
    }
}

void MetricsLog::write_header(const std::string& header_json) {
    out_ << header_json << "\n";
    if (!out_) {
        throw LoadError("failed writing metrics header: " + path_);
    }
}

void MetricsLog::write_row(const MetricsRow& row) {
    json j{{"type", "metric"},
           {"step", row.step},
           {"metric", row.metric},
           {"value", row.value},
           {"kind", row.kind},
           {"seed", row.seed}};
    out_ << j.dump() << "\n";
    if (!out_) {
        throw LoadError("failed writing metrics row: " + path_);
    }
}

void MetricsLog::flush() {
    out_.flush();
    if (!out_) {
        throw LoadError("failed flushing metrics log (disk full?): " + path_);
    }
}

ParsedLog read_metrics_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw LoadError("cannot open metrics log: " + path);
    }
    ParsedLog out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw LoadError("bad JSON at " + path + ":" + std::to_string(lineno) + ": " +
                            e.what());
        }
        const std::string type = j.value("type", "");
        if (type == "header") {
            out.header_json = line;
        } else if (type == "metric") {
            MetricsRow row;
            row.step = j.at("step").get<int64_t>();
            row.metric = j.at("metric").get<std::string>();
            row.value = j.at("value").get<double>();
            row.kind = j.value("kind", "");
            row.seed = j.value("seed", uint64_t{0});
            out.rows.push_back(std::move(row));
        }
    }
    return out;
}

}  // namespace iclab
