#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace vflu {

inline constexpr const char* kLibraryVersion = "0.1.0";

/// Run-completeness marker; written after every other artifact.
struct RunManifest {
    std::string arm;
    uint64_t master_seed = 0;
    std::string config_text;                     // resolved config snapshot
    std::map<std::string, double> phase_wall_s;  // wall-clock per phase
    std::vector<std::string> artifacts;          // every emitted file
    std::string library_version = kLibraryVersion;
};

void write_manifest(const std::filesystem::path& path, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& path);

struct TimingRow {
    std::string dir;
    std::string arm;
    std::map<std::string, double> phase_wall_s;
    double total_s = 0.0;
};

/// Per-arm wall-clock table assembled from run manifests. Directories
/// without a manifest make this fail, listing every absent one.
std::vector<TimingRow> time_report(const std::vector<std::filesystem::path>& run_dirs);

std::string format_timing_table(const std::vector<TimingRow>& rows);

} // namespace vflu
