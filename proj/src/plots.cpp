#include "vflu/plots.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "vflu/errors.hpp"
#include "vflu/metrics_io.hpp"

namespace vflu {

namespace {

constexpr double kPanelW = 420, kPanelH = 300;
constexpr double kMarginL = 52, kMarginR = 16, kMarginT = 34, kMarginB = 40;

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                         "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string num(double v) {
    char buf[32];
    snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

struct Panel {
    double x0 = 0; // left edge of the panel in svg coords
    std::string title;
    bool backdoor = false;
};

void render_panel(std::string& svg, const Panel& panel, const std::vector<MetricsSeries>& series,
                  size_t max_round) {
    const double px = panel.x0 + kMarginL, py = kMarginT;
    const double pw = kPanelW - kMarginL - kMarginR, ph = kPanelH - kMarginT - kMarginB;
    auto sx = [&](double round) {
        return max_round > 1 ? px + pw * (round - 1.0) / (double(max_round) - 1.0) : px + pw / 2;
    };
    auto sy = [&](double acc) { return py + ph * (1.0 - acc); };

    svg += "<text x='" + num(panel.x0 + kPanelW / 2) + "' y='20' text-anchor='middle' "
           "font-size='14' font-family='sans-serif'>" + panel.title + "</text>\n";
    // frame
    svg += "<rect x='" + num(px) + "' y='" + num(py) + "' width='" + num(pw) + "' height='" +
           num(ph) + "' fill='none' stroke='#444'/>\n";
    // y ticks at 0, 0.5, 1
    for (double t : {0.0, 0.5, 1.0}) {
        svg += "<line x1='" + num(px - 4) + "' y1='" + num(sy(t)) + "' x2='" + num(px) + "' y2='" +
               num(sy(t)) + "' stroke='#444'/>\n";
        svg += "<text x='" + num(px - 8) + "' y='" + num(sy(t) + 4) +
               "' text-anchor='end' font-size='11' font-family='sans-serif'>" + num(t) + "</text>\n";
    }
    // x ticks at 1 and max_round
    for (size_t t : {size_t(1), max_round}) {
        svg += "<line x1='" + num(sx(double(t))) + "' y1='" + num(py + ph) + "' x2='" +
               num(sx(double(t))) + "' y2='" + num(py + ph + 4) + "' stroke='#444'/>\n";
        svg += "<text x='" + num(sx(double(t))) + "' y='" + num(py + ph + 16) +
               "' text-anchor='middle' font-size='11' font-family='sans-serif'>" +
               std::to_string(t) + "</text>\n";
    }
    svg += "<text x='" + num(px + pw / 2) + "' y='" + num(py + ph + 32) +
           "' text-anchor='middle' font-size='12' font-family='sans-serif'>round</text>\n";

    size_t color = 0;
    for (const auto& s : series) {
        std::string points;
        for (const auto& r : s.rows) {
            const double v = panel.backdoor ? r.backdoor_acc : r.clean_acc;
            if (std::isnan(v)) continue;
            points += num(sx(double(r.round))) + "," + num(sy(v)) + " ";
        }
        if (points.empty()) continue;
        svg += "<polyline fill='none' stroke='";
        svg += kColors[color % (sizeof(kColors) / sizeof(kColors[0]))];
        svg += "' stroke-width='1.5' points='" + points + "'/>\n";
        ++color;
    }
}

} // namespace

std::string render_accuracy_svg(const std::vector<MetricsSeries>& series) {
    size_t max_round = 0;
    bool any = false;
    for (const auto& s : series) {
        for (const auto& r : s.rows) {
            if (!std::isnan(r.clean_acc) || !std::isnan(r.backdoor_acc)) {
                any = true;
                max_round = std::max(max_round, r.round);
            }
        }
    }
    if (!any) throw ArgumentError("no plottable metrics rows");
    if (max_round < 1) max_round = 1;

    const double legend_h = 18.0 * double(series.size()) + 8;
    const double width = 2 * kPanelW, height = kPanelH + legend_h;
    std::string svg = "<?xml version='1.0' encoding='UTF-8'?>\n<svg xmlns='http://www.w3.org/2000/svg' "
                      "width='" + num(width) + "' height='" + num(height) + "' viewBox='0 0 " +
                      num(width) + " " + num(height) + "'>\n";
    svg += "<rect width='100%' height='100%' fill='white'/>\n";
    render_panel(svg, {0, "clean accuracy", false}, series, max_round);
    render_panel(svg, {kPanelW, "backdoor accuracy", true}, series, max_round);

    // legend below the panels
    double ly = kPanelH + 10;
    size_t color = 0;
    for (const auto& s : series) {
        const char* col = kColors[color % (sizeof(kColors) / sizeof(kColors[0]))];
        svg += "<line x1='60' y1='" + num(ly) + "' x2='92' y2='" + num(ly) + "' stroke='";
        svg += col;
        svg += "' stroke-width='2'/>\n";
        svg += "<text x='100' y='" + num(ly + 4) + "' font-size='12' font-family='sans-serif'>" +
               s.label + "</text>\n";
        ly += 18;
        ++color;
    }
    svg += "</svg>\n";
    return svg;
}

std::filesystem::path emit_plots(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw ArgumentError("plots: " + dir.string() + " is not a directory");
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().filename() == "metrics.csv") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::vector<MetricsSeries> series;
    for (const auto& f : files) {
        MetricsSeries s;
        s.label = f.parent_path().filename().string();
        s.rows = parse_metrics_csv(f);
        series.push_back(std::move(s));
    }
    if (series.empty()) throw ArgumentError("plots: no metrics.csv under " + dir.string());
    const std::string svg = render_accuracy_svg(series);
    const auto out = dir / "accuracy.svg";
    std::ofstream f(out, std::ios::binary);
    if (!f) throw ArgumentError("cannot write " + out.string());
    f << svg;
    return out;
}

} // namespace vflu
