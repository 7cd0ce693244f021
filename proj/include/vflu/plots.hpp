#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vflu/fedavg.hpp"

namespace vflu {

struct MetricsSeries {
    std::string label;
    std::vector<MetricsRecord> rows;
};

/// Standalone SVG with two panels (clean accuracy, backdoor accuracy), one
/// polyline per series and panel. The y axis spans [0,1], the x axis
/// [1, max round]. Throws ArgumentError when nothing is plottable.
std::string render_accuracy_svg(const std::vector<MetricsSeries>& series);

/// Collect every metrics.csv under `dir` (recursively), label each series by
/// its directory, and write accuracy.svg into `dir`. Returns the SVG path.
std::filesystem::path emit_plots(const std::filesystem::path& dir);

} // namespace vflu
