#include "vflu/manifest.hpp"

#include <fstream>

#include <json.hpp>

#include "vflu/errors.hpp"

namespace vflu {

void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
    nlohmann::json j;
    j["arm"] = m.arm;
    j["master_seed"] = m.master_seed;
    j["config"] = m.config_text;
    j["phase_wall_s"] = m.phase_wall_s;
    j["artifacts"] = m.artifacts;
    j["library_version"] = m.library_version;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ArgumentError("cannot write " + path.string());
    f << j.dump(2) << "\n";
}

RunManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ArgumentError("cannot open manifest " + path.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    RunManifest m;
    m.arm = j.value("arm", "");
    m.master_seed = j.value("master_seed", uint64_t{0});
    m.config_text = j.value("config", "");
    m.library_version = j.value("library_version", "");
    if (j.contains("phase_wall_s")) {
        for (const auto& [k, v] : j["phase_wall_s"].items()) m.phase_wall_s[k] = v.get<double>();
    }
    if (j.contains("artifacts")) {
        for (const auto& a : j["artifacts"]) m.artifacts.push_back(a.get<std::string>());
    }
    return m;
}

std::vector<TimingRow> time_report(const std::vector<std::filesystem::path>& run_dirs) {
    if (run_dirs.empty()) throw ArgumentError("time_report: no run directories given");
    std::vector<std::string> missing;
    std::vector<TimingRow> rows;
    for (const auto& dir : run_dirs) {
        const auto mf = dir / "manifest.json";
        if (!std::filesystem::exists(mf)) {
            missing.push_back(dir.string());
            continue;
        }
        const RunManifest m = read_manifest(mf);
        TimingRow row;
        row.dir = dir.string();
        row.arm = m.arm;
        row.phase_wall_s = m.phase_wall_s;
        for (const auto& [k, v] : m.phase_wall_s) row.total_s += v;
        rows.push_back(std::move(row));
    }
    if (!missing.empty()) {
        std::string msg = "time_report: no manifest.json in:";
        for (const auto& d : missing) msg += " " + d;
        throw ArgumentError(msg);
    }
    return rows;
}

std::string format_timing_table(const std::vector<TimingRow>& rows) {
    std::string out = "arm          total_s      phases\n";
    for (const auto& r : rows) {
        char buf[64];
        snprintf(buf, sizeof(buf), "%-12s %-12.4g ", r.arm.c_str(), r.total_s);
        out += buf;
        bool first = true;
        for (const auto& [k, v] : r.phase_wall_s) {
            if (!first) out += ", ";
            first = false;
            snprintf(buf, sizeof(buf), "%s=%.4gs", k.c_str(), v);
            out += buf;
        }
        out += "  (";
        out += r.dir;
        out += ")\n";
    }
    return out;
}

} // namespace vflu
