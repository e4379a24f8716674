#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tspsens/instance.hpp"
#include "tspsens/task.hpp"

namespace tspsens {

/// Sequential color scale used by render_svg: linear interpolation through
/// five viridis stops (#440154, #3b528b, #21918c, #5ec962, #fde725) from the
/// smallest to the largest value. A constant vector maps every entry to the
/// middle stop. Uncolored elements are drawn in #9e9e9e.
std::array<int, 3> scale_color(double t);

/// Position of each value on [0,1] by min-max normalization (0.5 when constant).
std::vector<double> normalize_values(std::span<const double> values);

/// "#rrggbb".
std::string color_hex(const std::array<int, 3>& rgb);

struct RenderOptions {
    int size = 480;
    int margin = 24;
    /// Per-candidate values for `task`: node values (removal) or values for
    /// tour edges in tour order (forbid). Empty draws an uncolored tour.
    std::vector<double> values;
    Task task = Task::removal;
    std::string title;
};

/// Static SVG of the instance and its tour with a legend for the color scale.
std::string render_svg(const Instance& inst, std::span<const int> tour, const RenderOptions& opts = {});

}  // namespace tspsens
