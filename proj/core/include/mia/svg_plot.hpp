#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace mia {

// Small self-contained SVG line-chart writer. Plots carry their source data
// in an XML comment so they stay diffable and self-describing.

struct PlotSeries {
    std::string label;
    std::string color;
    std::vector<std::pair<double, double>> points;  // (x, y)
    bool markers = false;
};

// Shaded y-interval band, e.g. a confidence envelope.
struct PlotBand {
    std::string label;
    std::string color;
    std::vector<std::tuple<double, double, double>> points;  // (x, ylo, yhi)
};

struct PlotSpec {
    std::string title;
    std::string x_label, y_label;
    bool log_x = false;
    bool log_y = false;
    std::vector<PlotSeries> series;
    std::vector<PlotBand> bands;
    std::string data_comment;  // embedded verbatim (CSV table)
};

std::string render_svg_plot(const PlotSpec& spec);
void write_svg_plot(const PlotSpec& spec, const std::filesystem::path& path);

// matplotlib-style default cycle, keyed by series index.
std::string default_plot_color(std::size_t index);

}  // namespace mia
