#pragma once

#include <string>
#include <string_view>

#include "tspsens/error.hpp"

namespace tspsens {

/// Which sensitivity question is being asked. Removal candidates are the n
/// nodes in index order; forbid candidates are the n edges of the canonical
/// base tour in tour order.
enum class Task { removal, forbid };

inline std::string_view to_string(Task t) { return t == Task::removal ? "removal" : "forbid"; }

/// Accepts "removal"/"remove" and "forbid".
inline Task parse_task(std::string_view s) {
    if (s == "removal" || s == "remove") return Task::removal;
    if (s == "forbid") return Task::forbid;
    throw ValidationError("unknown task '" + std::string(s) + "' (expected removal|forbid)");
}

}  // namespace tspsens
