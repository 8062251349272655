#include "iclab/plots.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "iclab/errors.hpp"
#include "iclab/metrics_log.hpp"

namespace fs = std::filesystem;

namespace iclab {

namespace {

constexpr int kWidth = 720;
constexpr int kHeight = 420;
constexpr int kMarginL = 70, kMarginR = 20, kMarginT = 30, kMarginB = 50;

std::string sanitize(const std::string& metric) {
    std::string out = metric;
    for (char& c : out) {
        if (c == '/' || c == ' ') c = '_';
    }
    return out;
}

struct StepStat {
    int64_t step;
    double mean;
    double stddev;
    int n;
};

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

void svg_header(std::ostream& os, const std::string& title) {
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
       << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << kWidth / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\" "
       << "font-family=\"sans-serif\">" << title << "</text>\n";
}

void svg_axes(std::ostream& os, const std::string& xlab, const std::string& ylab) {
    os << "<line x1=\"" << kMarginL << "\" y1=\"" << kHeight - kMarginB << "\" x2=\""
       << kWidth - kMarginR << "\" y2=\"" << kHeight - kMarginB
       << "\" stroke=\"black\" stroke-width=\"1\"/>\n"
       << "<line x1=\"" << kMarginL << "\" y1=\"" << kMarginT << "\" x2=\"" << kMarginL
       << "\" y2=\"" << kHeight - kMarginB << "\" stroke=\"black\" stroke-width=\"1\"/>\n"
       << "<text x=\"" << (kMarginL + kWidth - kMarginR) / 2 << "\" y=\"" << kHeight - 12
       << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\">" << xlab
       << "</text>\n"
       << "<text x=\"16\" y=\"" << (kMarginT + kHeight - kMarginB) / 2
       << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\" "
       << "transform=\"rotate(-90 16 " << (kMarginT + kHeight - kMarginB) / 2 << ")\">" << ylab
       << "</text>\n";
}

}  // namespace

PlotOutputs emit_plots(const std::vector<std::string>& metrics_paths, const std::string& out_dir,
                       double final_window_fraction) {
    if (metrics_paths.empty()) {
        throw ConfigError("emit_plots: no metrics logs given");
    }
    fs::create_directories(out_dir);
    PlotOutputs out;

    // metric -> seed index -> (step -> value)
    std::map<std::string, std::map<size_t, std::map<int64_t, double>>> series;
    std::vector<std::set<std::string>> metrics_per_seed(metrics_paths.size());
    for (size_t s = 0; s < metrics_paths.size(); ++s) {
        ParsedLog log = read_metrics_log(metrics_paths[s]);
        for (const MetricsRow& row : log.rows) {
            series[row.metric][s][row.step] = row.value;
            metrics_per_seed[s].insert(row.metric);
        }
    }
    for (size_t s = 1; s < metrics_per_seed.size(); ++s) {
        if (metrics_per_seed[s] != metrics_per_seed[0]) {
            out.warnings.push_back("metric sets differ between " + metrics_paths[0] + " and " +
                                   metrics_paths[s]);
        }
    }

    int64_t max_step = 0;
    for (auto& [metric, seeds] : series) {
        for (auto& [s, pts] : seeds) {
            if (!pts.empty()) {
                max_step = std::max(max_step, pts.rbegin()->first);
            }
        }
    }

    struct BarRow {
        std::string metric;
        double mean;
        double stddev;
        int64_t rows;
    };
    std::vector<BarRow> bars;
    const int64_t window_start =
        max_step - static_cast<int64_t>(std::floor(final_window_fraction * max_step));

    for (auto& [metric, seeds] : series) {
        // per-step stats across seeds
        std::set<int64_t> steps;
        for (auto& [s, pts] : seeds) {
            for (auto& [st, v] : pts) steps.insert(st);
        }
        std::vector<StepStat> stats;
        for (int64_t st : steps) {
            double sum = 0.0;
            int n = 0;
            for (auto& [s, pts] : seeds) {
                auto it = pts.find(st);
                if (it == pts.end()) continue;
                sum += it->second;
                ++n;
            }
            const double mean = sum / n;
            double var = 0.0;
            if (n > 1) {
                for (auto& [s, pts] : seeds) {
                    auto it = pts.find(st);
                    if (it == pts.end()) continue;
                    const double d = it->second - mean;
                    var += d * d;
                }
                var /= n;
            }
            stats.push_back({st, mean, std::sqrt(var), n});
        }

        // table
        const std::string base = out_dir + "/" + sanitize(metric);
        {
            std::ofstream tsv(base + ".tsv");
            tsv << "step\tmean\tstd\tn_seeds\n";
            for (const StepStat& s : stats) {
                tsv << s.step << "\t" << fmt(s.mean) << "\t" << fmt(s.stddev) << "\t" << s.n
                    << "\n";
            }
            out.files.push_back(base + ".tsv");
        }

        // curve
        double ymin = 0.0, ymax = 1.0;
        for (const StepStat& s : stats) {
            ymin = std::min(ymin, s.mean - s.stddev);
            ymax = std::max(ymax, s.mean + s.stddev);
        }
        const double xspan = static_cast<double>(std::max<int64_t>(1, max_step));
        auto px = [&](int64_t st) {
            return kMarginL + (kWidth - kMarginL - kMarginR) * (static_cast<double>(st) / xspan);
        };
        auto py = [&](double v) {
            return kMarginT +
                   (kHeight - kMarginT - kMarginB) * (1.0 - (v - ymin) / (ymax - ymin + 1e-12));
        };
        std::ofstream svg(base + ".svg");
        svg_header(svg, metric);
        svg_axes(svg, "training step", "value");
        bool any_spread = false;
        for (const StepStat& s : stats) {
            if (s.stddev > 1e-12 * std::max(1.0, std::abs(s.mean))) any_spread = true;
        }
        if (any_spread && !stats.empty()) {
            svg << "<polygon fill=\"#4477aa\" fill-opacity=\"0.25\" stroke=\"none\" points=\"";
            for (const StepStat& s : stats) {
                svg << px(s.step) << "," << py(s.mean + s.stddev) << " ";
            }
            for (auto it = stats.rbegin(); it != stats.rend(); ++it) {
                svg << px(it->step) << "," << py(it->mean - it->stddev) << " ";
            }
            svg << "\"/>\n";
        }
        if (!stats.empty()) {
            svg << "<polyline fill=\"none\" stroke=\"#4477aa\" stroke-width=\"2\" points=\"";
            for (const StepStat& s : stats) {
                svg << px(s.step) << "," << py(s.mean) << " ";
            }
            svg << "\"/>\n";
        }
        svg << "</svg>\n";
        out.files.push_back(base + ".svg");

        // final-window aggregate: plain mean over every row in the window
        double wsum = 0.0;
        int64_t wn = 0;
        for (auto& [s, pts] : seeds) {
            for (auto& [st, v] : pts) {
                if (st >= window_start) {
                    wsum += v;
                    ++wn;
                }
            }
        }
        if (wn > 0) {
            const double mean = wsum / static_cast<double>(wn);
            double var = 0.0;
            for (auto& [s, pts] : seeds) {
                for (auto& [st, v] : pts) {
                    if (st >= window_start) {
                        const double d = v - mean;
                        var += d * d;
                    }
                }
            }
            if (wn > 1) var /= static_cast<double>(wn);
            bars.push_back({metric, mean, std::sqrt(var), wn});
        }
    }

    // final-window bar chart + table
    {
        std::ofstream tsv(out_dir + "/final_window.tsv");
        tsv << "metric\twindow_start\tmean\tstd\tn_rows\n";
        for (const BarRow& b : bars) {
            tsv << b.metric << "\t" << window_start << "\t" << fmt(b.mean) << "\t"
                << fmt(b.stddev) << "\t" << b.rows << "\n";
        }
        out.files.push_back(out_dir + "/final_window.tsv");
    }
    {
        std::ofstream svg(out_dir + "/final_window.svg");
        svg_header(svg, "final-window means (last " +
                            std::to_string(static_cast<int>(final_window_fraction * 100)) +
                            "% of steps)");
        svg_axes(svg, "metric", "mean value");
        double ymax = 1.0;
        for (const BarRow& b : bars) ymax = std::max(ymax, b.mean + b.stddev);
        const double bw =
            (kWidth - kMarginL - kMarginR) / std::max<double>(1.0, static_cast<double>(bars.size()));
        for (size_t i = 0; i < bars.size(); ++i) {
            const double x = kMarginL + bw * static_cast<double>(i) + bw * 0.15;
            const double h = (kHeight - kMarginT - kMarginB) * (bars[i].mean / ymax);
            const double y = kHeight - kMarginB - h;
            svg << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << bw * 0.7
                << "\" height=\"" << h << "\" fill=\"#4477aa\"/>\n";
            svg << "<text x=\"" << x + bw * 0.35 << "\" y=\"" << kHeight - kMarginB + 14
                << "\" text-anchor=\"end\" font-size=\"9\" font-family=\"sans-serif\" "
                << "transform=\"rotate(-35 " << x + bw * 0.35 << " " << kHeight - kMarginB + 14
                << ")\">" << bars[i].metric << "</text>\n";
        }
        svg << "</svg>\n";
        out.files.push_back(out_dir + "/final_window.svg");
    }
    return out;
}

}  // namespace iclab
