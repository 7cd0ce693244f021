#include "vflu/metrics_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "vflu/errors.hpp"

namespace vflu {

namespace {
constexpr const char* kHeader = "round,phase,clean_acc,backdoor_acc,wall_ms,drift,dist_to_center";
} // namespace

std::string format_double(double v) {
    if (std::isnan(v)) return "";
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string metrics_to_csv(const std::vector<MetricsRecord>& records) {
    std::string out = kHeader;
    out += '\n';
    for (const auto& r : records) {
        out += std::to_string(r.round);
        out += ',';
        out += r.phase;
        out += ',';
        out += format_double(r.clean_acc);
        out += ',';
        out += format_double(r.backdoor_acc);
        out += ',';
        out += format_double(r.wall_ms);
        out += ',';
        out += format_double(r.drift);
        out += ',';
        out += format_double(r.dist_to_center);
        out += '\n';
    }
    return out;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRecord>& records) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ArgumentError("cannot write " + path.string());
    f << metrics_to_csv(records);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_field(const std::string& s, const std::string& origin, size_t line_no) {
    if (s.empty()) return NAN;
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw FormatError(origin + ":" + std::to_string(line_no) + ": bad numeric field '" + s + "'");
    }
    return v;
}

} // namespace

std::vector<MetricsRecord> parse_metrics_csv_text(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kHeader) {
        throw FormatError(origin + ":1: unexpected metrics header '" + line + "'");
    }
    std::vector<MetricsRecord> out;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 7) {
            throw FormatError(origin + ":" + std::to_string(line_no) + ": expected 7 fields, got " +
                              std::to_string(fields.size()));
        }
        MetricsRecord r;
        r.round = size_t(parse_field(fields[0], origin, line_no));
        r.phase = fields[1];
        r.clean_acc = parse_field(fields[2], origin, line_no);
        r.backdoor_acc = parse_field(fields[3], origin, line_no);
        r.wall_ms = parse_field(fields[4], origin, line_no);
        r.drift = parse_field(fields[5], origin, line_no);
        r.dist_to_center = parse_field(fields[6], origin, line_no);
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<MetricsRecord> parse_metrics_csv(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_metrics_csv_text(ss.str(), path.string());
}

} // namespace vflu
