#pragma once

#include <string>
#include <vector>

namespace iclab {

// Renders accuracy-vs-step curves (across-seed mean with +-1 std shading)
// and a final-window bar chart from one metrics log per seed. Every figure
// is also written as a plain TSV table next to the SVG. Returns the emitted
// file paths; metric sets that differ across seeds produce a warning, not a
// failure.
struct PlotOutputs {
    std::vector<std::string> files;
    std::vector<std::string> warnings;
};

PlotOutputs emit_plots(const std::vector<std::string>& metrics_paths, const std::string& out_dir,
                       double final_window_fraction = 0.2);

}  // namespace iclab
