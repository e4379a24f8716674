#include "tspsens/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "tspsens/error.hpp"

namespace tspsens {

namespace {

constexpr std::array<std::array<int, 3>, 5> kStops = {{
    {0x44, 0x01, 0x54},
    {0x3b, 0x52, 0x8b},
    {0x21, 0x91, 0x8c},
    {0x5e, 0xc9, 0x62},
    {0xfd, 0xe7, 0x25},
}};

constexpr const char* kNeutral = "#9e9e9e";

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string fmt4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

}  // namespace

std::array<int, 3> scale_color(double t) {
    t = std::clamp(std::isfinite(t) ? t : 0.5, 0.0, 1.0);
    const double pos = t * static_cast<double>(kStops.size() - 1);
    const auto lo = std::min<std::size_t>(static_cast<std::size_t>(pos), kStops.size() - 2);
    const double f = pos - static_cast<double>(lo);
    std::array<int, 3> out{};
    for (std::size_t c = 0; c < 3; ++c) {
        out[c] = static_cast<int>(std::lround(kStops[lo][c] + f * (kStops[lo + 1][c] - kStops[lo][c])));
    }
    return out;
}

std::vector<double> normalize_values(std::span<const double> values) {
    std::vector<double> out(values.size(), 0.5);
    if (values.empty()) return out;
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    const double span = *mx - *mn;
    if (!(span > 1e-12)) return out;
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - *mn) / span;
    return out;
}

std::string color_hex(const std::array<int, 3>& rgb) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
    return buf;
}

std::string render_svg(const Instance& inst, std::span<const int> tour, const RenderOptions& opts) {
    const std::size_t n = inst.size();
    if (tour.size() < 3) throw ValidationError("render needs a tour of at least 3 nodes");
    for (int v : tour) {
        if (v < 0 || static_cast<std::size_t>(v) >= n) throw IndexError("tour node " + std::to_string(v) + " out of range");
    }
    const bool colored = !opts.values.empty();
    if (colored) {
        const std::size_t want = opts.task == Task::removal ? n : tour.size();
        if (opts.values.size() != want) {
            throw ValidationError("expected " + std::to_string(want) + " values for the " +
                                  std::string(to_string(opts.task)) + " task, got " +
                                  std::to_string(opts.values.size()));
        }
    }
    const auto norm = normalize_values(opts.values);
    const double inner = opts.size - 2.0 * opts.margin;
    const int legend_h = colored ? 40 : 0;
    auto px = [&](const Point& p) { return opts.margin + p.x * inner; };
    auto py = [&](const Point& p) { return opts.margin + (1.0 - p.y) * inner; };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(opts.size) + "\" height=\"" +
           std::to_string(opts.size + legend_h) + "\" viewBox=\"0 0 " + std::to_string(opts.size) + " " +
           std::to_string(opts.size + legend_h) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!opts.title.empty()) {
        svg += "<title>" + opts.title + "</title>\n";
    }

    const bool edge_colors = colored && opts.task == Task::forbid;
    const bool node_colors = colored && opts.task == Task::removal;
    for (std::size_t t = 0; t < tour.size(); ++t) {
        const Point& a = inst[static_cast<std::size_t>(tour[t])];
        const Point& b = inst[static_cast<std::size_t>(tour[(t + 1) % tour.size()])];
        const std::string stroke = edge_colors ? color_hex(scale_color(norm[t])) : std::string(kNeutral);
        svg += "<line class=\"edge\" data-edge=\"" + std::to_string(tour[t]) + "-" +
               std::to_string(tour[(t + 1) % tour.size()]) + "\" x1=\"" + fmt(px(a)) + "\" y1=\"" + fmt(py(a)) +
               "\" x2=\"" + fmt(px(b)) + "\" y2=\"" + fmt(py(b)) + "\" stroke=\"" + stroke + "\" stroke-width=\"" +
               (edge_colors ? "4" : "2") + "\"";
        if (edge_colors) svg += " data-value=\"" + fmt4(opts.values[t]) + "\"";
        svg += "/>\n";
    }
    for (std::size_t i = 0; i < n; ++i) {
        const std::string fill = node_colors ? color_hex(scale_color(norm[i])) : std::string(kNeutral);
        svg += "<circle class=\"node\" data-node=\"" + std::to_string(i) + "\" cx=\"" + fmt(px(inst[i])) +
               "\" cy=\"" + fmt(py(inst[i])) + "\" r=\"6\" fill=\"" + fill + "\" stroke=\"black\" stroke-width=\"1\"";
        if (node_colors) svg += " data-value=\"" + fmt4(opts.values[i]) + "\"";
        svg += "/>\n";
    }

    if (colored) {
        const auto [mn, mx] = std::minmax_element(opts.values.begin(), opts.values.end());
        const int y0 = opts.size + 8;
        const int steps = 20;
        const double w = inner / steps;
        svg += "<g class=\"legend\">\n";
        for (int k = 0; k < steps; ++k) {
            const double t = (k + 0.5) / steps;
            svg += "<rect x=\"" + fmt(opts.margin + k * w) + "\" y=\"" + std::to_string(y0) + "\" width=\"" +
                   fmt(w + 0.5) + "\" height=\"12\" fill=\"" + color_hex(scale_color(t)) + "\"/>\n";
        }
        svg += "<text x=\"" + std::to_string(opts.margin) + "\" y=\"" + std::to_string(y0 + 26) +
               "\" font-size=\"11\" font-family=\"sans-serif\">" + fmt4(*mn) + "</text>\n";
        svg += "<text x=\"" + fmt(opts.margin + inner) + "\" y=\"" + std::to_string(y0 + 26) +
               "\" font-size=\"11\" font-family=\"sans-serif\" text-anchor=\"end\">" + fmt4(*mx) + "</text>\n";
        svg += "</g>\n";
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace tspsens
