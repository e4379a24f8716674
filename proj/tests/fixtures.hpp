#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "tspsens/instance.hpp"

namespace fixtures {

inline tspsens::Instance unit_square() {
    return tspsens::make_instance({{0, 0}, {1, 0}, {1, 1}, {0, 1}}, "square");
}

inline const double kSqrt2 = std::sqrt(2.0);
// 100 * (400 - (200 + 100 sqrt2)) / 400
inline const double kSquareRemovalPct = 100.0 * (200.0 - 100.0 * kSqrt2) / 400.0;
// 100 * ((200 + 200 sqrt2) - 400) / 400
inline const double kSquareForbidPct = 100.0 * (200.0 * kSqrt2 - 200.0) / 400.0;

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("tspsens_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace fixtures
