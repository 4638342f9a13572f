#include "mia/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "mia/error.hpp"

namespace mia {

namespace {

constexpr double kWidth = 640, kHeight = 440;
constexpr double kMarginL = 64, kMarginR = 20, kMarginT = 36, kMarginB = 48;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

struct Axis {
    double lo = 0.0, hi = 1.0;
    bool log = false;

    double to_unit(double v) const {
        double a = log ? std::log10(v) : v;
        double l = log ? std::log10(lo) : lo;
        double h = log ? std::log10(hi) : hi;
        return (a - l) / (h - l);
    }

    std::vector<double> ticks() const {
        std::vector<double> out;
        if (log) {
            int e0 = static_cast<int>(std::floor(std::log10(lo)));
            int e1 = static_cast<int>(std::ceil(std::log10(hi)));
            for (int e = e0; e <= e1; ++e) {
                double v = std::pow(10.0, e);
                if (v >= lo * 0.999 && v <= hi * 1.001) out.push_back(v);
            }
            if (out.size() < 2) {
                out = {lo, hi};
            }
        } else {
            double span = hi - lo;
            double raw = span / 5.0;
            double mag = std::pow(10.0, std::floor(std::log10(raw)));
            double step = mag;
            for (double m : {1.0, 2.0, 5.0, 10.0}) {
                if (mag * m >= raw) {
                    step = mag * m;
                    break;
                }
            }
            double start = std::ceil(lo / step) * step;
            for (double v = start; v <= hi + step * 1e-9; v += step) {
                out.push_back(std::abs(v) < step * 1e-9 ? 0.0 : v);
            }
        }
        return out;
    }
};

void grow(double v, double& lo, double& hi) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
}

std::string escape_xml(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string default_plot_color(std::size_t index) {
    static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c",
                                    "#d62728", "#9467bd", "#8c564b"};
    return palette[index % 6];
}

std::string render_svg_plot(const PlotSpec& spec) {
    double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo;
    double ylo = xlo, yhi = -xlo;
    auto usable = [&](double x, double y) {
        if (!std::isfinite(x) || !std::isfinite(y)) return false;
        if (spec.log_x && x <= 0.0) return false;
        if (spec.log_y && y <= 0.0) return false;
        return true;
    };
    for (const auto& s : spec.series) {
        for (auto [x, y] : s.points) {
            if (usable(x, y)) {
                grow(x, xlo, xhi);
                grow(y, ylo, yhi);
            }
        }
    }
    for (const auto& b : spec.bands) {
        for (auto [x, y0, y1] : b.points) {
            if (usable(x, y0)) {
                grow(x, xlo, xhi);
                grow(y0, ylo, yhi);
            }
            if (usable(x, y1)) grow(y1, ylo, yhi);
        }
    }
    if (!(xlo < xhi)) {
        xhi = xlo + 1.0;
        xlo = spec.log_x ? xlo * 0.5 : xlo - 1.0;
    }
    if (!(ylo < yhi)) {
        yhi = ylo + 1.0;
        ylo = spec.log_y ? ylo * 0.5 : ylo - 1.0;
    }
    if (!spec.log_y) {
        double pad = 0.05 * (yhi - ylo);
        ylo -= pad;
        yhi += pad;
    }

    Axis xa{xlo, xhi, spec.log_x};
    Axis ya{ylo, yhi, spec.log_y};
    const double plot_w = kWidth - kMarginL - kMarginR;
    const double plot_h = kHeight - kMarginT - kMarginB;
    auto px = [&](double v) { return kMarginL + xa.to_unit(v) * plot_w; };
    auto py = [&](double v) { return kMarginT + (1.0 - ya.to_unit(v)) * plot_h; };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) +
           "\" height=\"" + num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) +
           " " + num(kHeight) + "\">\n";
    if (!spec.data_comment.empty()) {
        std::string safe = spec.data_comment;
        // "--" is illegal inside XML comments
        std::size_t pos = 0;
        while ((pos = safe.find("--", pos)) != std::string::npos) {
            safe.replace(pos, 2, "- -");
        }
        svg += "<!-- data:\n" + safe + "\n-->\n";
    }
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + num(kWidth / 2) + "\" y=\"22\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"15\">" +
           escape_xml(spec.title) + "</text>\n";

    // gridlines + tick labels
    for (double t : xa.ticks()) {
        double x = px(t);
        svg += "<line x1=\"" + num(x) + "\" y1=\"" + num(kMarginT) + "\" x2=\"" +
               num(x) + "\" y2=\"" + num(kMarginT + plot_h) +
               "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        svg += "<text x=\"" + num(x) + "\" y=\"" + num(kMarginT + plot_h + 16) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
               "font-size=\"11\">" + num(t) + "</text>\n";
    }
    for (double t : ya.ticks()) {
        double y = py(t);
        svg += "<line x1=\"" + num(kMarginL) + "\" y1=\"" + num(y) + "\" x2=\"" +
               num(kMarginL + plot_w) + "\" y2=\"" + num(y) +
               "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        svg += "<text x=\"" + num(kMarginL - 6) + "\" y=\"" + num(y + 4) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" "
               "font-size=\"11\">" + num(t) + "</text>\n";
    }
    svg += "<rect x=\"" + num(kMarginL) + "\" y=\"" + num(kMarginT) +
           "\" width=\"" + num(plot_w) + "\" height=\"" + num(plot_h) +
           "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";

    for (const auto& b : spec.bands) {
        std::string pts;
        for (auto it = b.points.begin(); it != b.points.end(); ++it) {
            auto [x, y0, y1] = *it;
            if (!usable(x, y1)) continue;
            pts += num(px(x)) + "," + num(py(y1)) + " ";
        }
        for (auto it = b.points.rbegin(); it != b.points.rend(); ++it) {
            auto [x, y0, y1] = *it;
            if (!usable(x, std::max(y0, ylo))) continue;
            pts += num(px(x)) + "," + num(py(std::max(y0, ylo))) + " ";
        }
        if (!pts.empty()) {
            svg += "<polygon points=\"" + pts + "\" fill=\"" + b.color +
                   "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
        }
    }

    for (const auto& s : spec.series) {
        std::string pts;
        for (auto [x, y] : s.points) {
            if (!usable(x, y)) continue;
            pts += num(px(x)) + "," + num(py(y)) + " ";
        }
        if (pts.empty()) continue;
        svg += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" +
               s.color + "\" stroke-width=\"1.8\"/>\n";
        if (s.markers) {
            for (auto [x, y] : s.points) {
                if (!usable(x, y)) continue;
                svg += "<circle cx=\"" + num(px(x)) + "\" cy=\"" + num(py(y)) +
                       "\" r=\"2.6\" fill=\"" + s.color + "\"/>\n";
            }
        }
    }

    // legend
    double ly = kMarginT + 10;
    for (const auto& s : spec.series) {
        double lx = kMarginL + plot_w - 150;
        svg += "<line x1=\"" + num(lx) + "\" y1=\"" + num(ly) + "\" x2=\"" +
               num(lx + 22) + "\" y2=\"" + num(ly) + "\" stroke=\"" + s.color +
               "\" stroke-width=\"2\"/>\n";
        svg += "<text x=\"" + num(lx + 28) + "\" y=\"" + num(ly + 4) +
               "\" font-family=\"sans-serif\" font-size=\"12\">" +
               escape_xml(s.label) + "</text>\n";
        ly += 16;
    }

    svg += "<text x=\"" + num(kMarginL + plot_w / 2) + "\" y=\"" +
           num(kHeight - 10) + "\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"13\">" +
           escape_xml(spec.x_label) + "</text>\n";
    svg += "<text x=\"16\" y=\"" + num(kMarginT + plot_h / 2) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"13\" transform=\"rotate(-90 16 " +
           num(kMarginT + plot_h / 2) + ")\">" + escape_xml(spec.y_label) +
           "</text>\n";
    svg += "</svg>\n";
    return svg;
}

void write_svg_plot(const PlotSpec& spec, const std::filesystem::path& path) {
    std::string svg = render_svg_plot(spec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out.write(svg.data(), static_cast<std::streamsize>(svg.size()))) {
        throw DataError(Errc::io_failure, "cannot write plot: " + path.string());
    }
}

}  // namespace mia
