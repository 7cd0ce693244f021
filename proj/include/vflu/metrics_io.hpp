#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vflu/fedavg.hpp"

namespace vflu {

/// Shortest round-trip decimal form of v (std::to_chars); "" for NaN.
std::string format_double(double v);

/// Stable schema: round,phase,clean_acc,backdoor_acc,wall_ms,drift,dist_to_center
/// NaN fields are written empty.
std::string metrics_to_csv(const std::vector<MetricsRecord>& records);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRecord>& records);

/// Inverse of metrics_to_csv; empty fields parse back to NaN.
std::vector<MetricsRecord> parse_metrics_csv(const std::filesystem::path& path);
std::vector<MetricsRecord> parse_metrics_csv_text(const std::string& text, const std::string& origin);

} // namespace vflu
