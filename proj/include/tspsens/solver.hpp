#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "tspsens/instance.hpp"

namespace tspsens {

/// Cost assigned to a forbidden edge. Any tour whose cost reaches half of
/// this is treated as having used a forbidden edge.
inline constexpr double kForbidCost = 1e7;

/// Largest active-node count handled by solve_exact.
inline constexpr std::size_t kExactMaxNodes = 18;

/// Largest active-node count handled by solve_brute_force.
inline constexpr std::size_t kBruteForceMaxNodes = 10;

/// Unordered node pair, stored with first < second.
struct Edge {
    int u = 0;
    int v = 0;

    Edge() = default;
    Edge(int a, int b) : u(a < b ? a : b), v(a < b ? b : a) {}

    friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct Tour {
    /// Active node indices in visiting order, canonical orientation.
    std::vector<int> order;
    /// Geometric closed-cycle length in scaled units.
    double length = 0.0;
    /// True iff produced by an exact method.
    bool exact = false;
};

struct SolveConstraints {
    std::set<int> removed_nodes;
    std::set<Edge> forbidden_edges;

    friend bool operator==(const SolveConstraints&, const SolveConstraints&) = default;
};

/// Throws ValidationError/IndexError if the constraints are inconsistent
/// with an n-node instance (bad indices, forbidden edge touching a removed
/// node, self-loop, fewer than 3 active nodes).
void validate_constraints(std::size_t n, const SolveConstraints& cons);

/// Nodes not removed, ascending.
std::vector<int> active_nodes(std::size_t n, const SolveConstraints& cons);

/// Rotate/reflect a cycle so it starts at its lowest node and continues
/// toward the lower-indexed of that node's two neighbours.
std::vector<int> canonical_order(std::span<const int> cycle);

/// Closed-cycle length under the metric; no forbid penalty.
/// Throws ValidationError if `order` has repeats or bad indices.
double tour_length(const DistanceMatrix& dist, std::span<const int> order);
double tour_length(const Instance& inst, std::span<const int> order);

/// Held-Karp over subsets of the active nodes, forbidden edges priced at
/// kForbidCost. Requires 3 <= active <= 18.
Tour solve_exact(const DistanceMatrix& dist, const SolveConstraints& cons = {});
Tour solve_exact(const Instance& inst, const SolveConstraints& cons = {});

/// How brute force treats forbidden edges. Big-M mirrors solve_exact;
/// structural skips every cycle that contains one (used to cross-check
/// the Big-M route).
enum class ForbidMode { big_m, structural };

/// Enumerates all (m-1)!/2 cycles. Requires 3 <= active <= 10.
Tour solve_brute_force(const DistanceMatrix& dist, const SolveConstraints& cons = {},
                       ForbidMode mode = ForbidMode::big_m);
Tour solve_brute_force(const Instance& inst, const SolveConstraints& cons = {},
                       ForbidMode mode = ForbidMode::big_m);

/// Nearest-neighbour construction from a seed-chosen start node, then
/// first-improvement 2-opt to a local optimum. exact = false.
Tour solve_heuristic(const DistanceMatrix& dist, const SolveConstraints& cons, std::uint64_t seed);
Tour solve_heuristic(const Instance& inst, const SolveConstraints& cons, std::uint64_t seed);

/// solve_exact when the active count allows it, otherwise solve_heuristic.
Tour solve_auto(const DistanceMatrix& dist, const SolveConstraints& cons, std::uint64_t seed = 0);

}  // namespace tspsens
