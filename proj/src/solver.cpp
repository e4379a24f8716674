#include "tspsens/solver.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "tspsens/error.hpp"
#include "tspsens/rng.hpp"

namespace tspsens {

namespace {

/// Local cost table over the active nodes with forbidden edges priced at kForbidCost.
struct CostTable {
    std::vector<int> nodes;
    std::vector<double> cost;
    std::vector<char> forbidden;
    std::size_t m = 0;

    CostTable(const DistanceMatrix& dist, const SolveConstraints& cons)
        : nodes(active_nodes(dist.size(), cons)), m(nodes.size()) {
        cost.resize(m * m);
        forbidden.assign(m * m, 0);
        for (std::size_t a = 0; a < m; ++a) {
            for (std::size_t b = 0; b < m; ++b) {
                const bool f = a != b && cons.forbidden_edges.contains(Edge(nodes[a], nodes[b]));
                forbidden[a * m + b] = f ? 1 : 0;
                cost[a * m + b] = f ? kForbidCost : dist(nodes[a], nodes[b]);
            }
        }
    }

    double operator()(std::size_t a, std::size_t b) const { return cost[a * m + b]; }
    bool is_forbidden(std::size_t a, std::size_t b) const { return forbidden[a * m + b] != 0; }
};

[[noreturn]] void throw_infeasible(std::size_t m, std::size_t forbidden_count) {
    throw InfeasibleError("no tour on " + std::to_string(m) + " active nodes avoids all " +
                          std::to_string(forbidden_count) + " forbidden edge(s)");
}

Tour finish(const DistanceMatrix& dist, const std::vector<int>& cycle, bool exact) {
    Tour t;
    t.order = canonical_order(cycle);
    t.length = tour_length(dist, t.order);
    t.exact = exact;
    return t;
}

}  // namespace

void validate_constraints(std::size_t n, const SolveConstraints& cons) {
    for (int r : cons.removed_nodes) {
        if (r < 0 || static_cast<std::size_t>(r) >= n) {
            throw IndexError("removed node " + std::to_string(r) + " out of range for n=" + std::to_string(n));
        }
    }
    for (const auto& e : cons.forbidden_edges) {
        if (e.u < 0 || static_cast<std::size_t>(e.v) >= n) {
            throw IndexError("forbidden edge {" + std::to_string(e.u) + "," + std::to_string(e.v) +
                             "} out of range for n=" + std::to_string(n));
        }
        if (e.u == e.v) throw ValidationError("forbidden edge is a self-loop on node " + std::to_string(e.u));
        if (cons.removed_nodes.contains(e.u) || cons.removed_nodes.contains(e.v)) {
            throw ValidationError("forbidden edge {" + std::to_string(e.u) + "," + std::to_string(e.v) +
                                  "} references a removed node");
        }
    }
    if (n < cons.removed_nodes.size() + 3) {
        throw ValidationError("at least 3 nodes must remain after removals");
    }
}

std::vector<int> active_nodes(std::size_t n, const SolveConstraints& cons) {
    std::vector<int> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!cons.removed_nodes.contains(static_cast<int>(i))) out.push_back(static_cast<int>(i));
    }
    return out;
}

std::vector<int> canonical_order(std::span<const int> cycle) {
    const std::size_t m = cycle.size();
    if (m < 3) return {cycle.begin(), cycle.end()};
    const auto start = static_cast<std::size_t>(std::min_element(cycle.begin(), cycle.end()) - cycle.begin());
    const int next = cycle[(start + 1) % m];
    const int prev = cycle[(start + m - 1) % m];
    std::vector<int> out(m);
    for (std::size_t k = 0; k < m; ++k) {
        out[k] = next <= prev ? cycle[(start + k) % m] : cycle[(start + m - k) % m];
    }
    return out;
}

double tour_length(const DistanceMatrix& dist, std::span<const int> order) {
    const std::size_t n = dist.size();
    std::vector<char> seen(n, 0);
    for (int v : order) {
        if (v < 0 || static_cast<std::size_t>(v) >= n) {
            throw ValidationError("tour references node " + std::to_string(v) + " outside [0," + std::to_string(n) + ")");
        }
        if (seen[v]) throw ValidationError("tour visits node " + std::to_string(v) + " more than once");
        seen[v] = 1;
    }
    if (order.size() < 2) return 0.0;
    double total = 0.0;
    for (std::size_t t = 0; t < order.size(); ++t) {
        total += dist(order[t], order[(t + 1) % order.size()]);
    }
    return total;
}

double tour_length(const Instance& inst, std::span<const int> order) {
    return tour_length(DistanceMatrix(inst), order);
}

Tour solve_exact(const DistanceMatrix& dist, const SolveConstraints& cons) {
    validate_constraints(dist.size(), cons);
    const CostTable c(dist, cons);
    const std::size_t m = c.m;
    if (m > kExactMaxNodes) {
        throw SizeLimitError("exact solve supports at most " + std::to_string(kExactMaxNodes) + " active nodes (got " +
                             std::to_string(m) + "); use solve_heuristic");
    }

    // Node 0 of the local table is the fixed start; the DP runs over the other k nodes.
    const std::size_t k = m - 1;
    const std::size_t full = (std::size_t{1} << k) - 1;
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dp((full + 1) * k, inf);
    std::vector<std::uint8_t> parent((full + 1) * k, 0xFF);

    for (std::size_t j = 0; j < k; ++j) dp[(std::size_t{1} << j) * k + j] = c(0, j + 1);

    for (std::size_t mask = 1; mask <= full; ++mask) {
        if ((mask & (mask - 1)) == 0) continue;
        for (std::size_t j = 0; j < k; ++j) {
            if (!(mask & (std::size_t{1} << j))) continue;
            const std::size_t prev_mask = mask ^ (std::size_t{1} << j);
            double best = inf;
            std::uint8_t arg = 0xFF;
            for (std::size_t i = 0; i < k; ++i) {
                if (!(prev_mask & (std::size_t{1} << i))) continue;
                const double cand = dp[prev_mask * k + i] + c(i + 1, j + 1);
                if (cand < best) {
                    best = cand;
                    arg = static_cast<std::uint8_t>(i);
                }
            }
            dp[mask * k + j] = best;
            parent[mask * k + j] = arg;
        }
    }

    double best = inf;
    std::size_t last = 0;
    for (std::size_t j = 0; j < k; ++j) {
        const double cand = dp[full * k + j] + c(j + 1, 0);
        if (cand < best) {
            best = cand;
            last = j;
        }
    }
    if (best >= kForbidCost / 2) throw_infeasible(m, cons.forbidden_edges.size());

    std::vector<int> cycle;
    cycle.reserve(m);
    std::size_t mask = full;
    std::size_t cur = last;
    while (true) {
        cycle.push_back(c.nodes[cur + 1]);
        const std::uint8_t p = parent[mask * k + cur];
        mask ^= std::size_t{1} << cur;
        if (mask == 0) break;
        cur = p;
    }
    cycle.push_back(c.nodes[0]);
    std::reverse(cycle.begin(), cycle.end());
    return finish(dist, cycle, true);
}

Tour solve_exact(const Instance& inst, const SolveConstraints& cons) { return solve_exact(DistanceMatrix(inst), cons); }

Tour solve_brute_force(const DistanceMatrix& dist, const SolveConstraints& cons, ForbidMode mode) {
    validate_constraints(dist.size(), cons);
    const CostTable c(dist, cons);
    const std::size_t m = c.m;
    if (m > kBruteForceMaxNodes) {
        throw SizeLimitError("brute force supports at most " + std::to_string(kBruteForceMaxNodes) +
                             " active nodes (got " + std::to_string(m) + ")");
    }

    std::vector<std::size_t> rest(m - 1);
    for (std::size_t i = 0; i < rest.size(); ++i) rest[i] = i + 1;

    double best = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> best_perm;
    do {
        // Each undirected cycle appears twice; keep the orientation with rest.front() < rest.back().
        if (rest.front() > rest.back()) continue;
        double total = 0.0;
        bool uses_forbidden = false;
        std::size_t prev = 0;
        for (std::size_t v : rest) {
            uses_forbidden |= c.is_forbidden(prev, v);
            total += c(prev, v);
            prev = v;
        }
        uses_forbidden |= c.is_forbidden(prev, 0);
        total += c(prev, 0);
        if (mode == ForbidMode::structural && uses_forbidden) continue;
        if (total < best) {
            best = total;
            best_perm = rest;
        }
    } while (std::next_permutation(rest.begin(), rest.end()));

    if (best_perm.empty() || best >= kForbidCost / 2) throw_infeasible(m, cons.forbidden_edges.size());

    std::vector<int> cycle{c.nodes[0]};
    for (std::size_t v : best_perm) cycle.push_back(c.nodes[v]);
    return finish(dist, cycle, true);
}

Tour solve_brute_force(const Instance& inst, const SolveConstraints& cons, ForbidMode mode) {
    return solve_brute_force(DistanceMatrix(inst), cons, mode);
}

Tour solve_heuristic(const DistanceMatrix& dist, const SolveConstraints& cons, std::uint64_t seed) {
    validate_constraints(dist.size(), cons);
    const CostTable c(dist, cons);
    const std::size_t m = c.m;
    if (m < 4) throw ValidationError("heuristic solve needs at least 4 active nodes (got " + std::to_string(m) + ")");

    Rng rng(seed);
    std::vector<std::size_t> t;
    t.reserve(m);
    std::vector<char> used(m, 0);
    std::size_t cur = static_cast<std::size_t>(rng.below(m));
    t.push_back(cur);
    used[cur] = 1;
    while (t.size() < m) {
        std::size_t next = m;
        for (std::size_t q = 0; q < m; ++q) {
            if (!used[q] && (next == m || c(cur, q) < c(cur, next))) next = q;
        }
        t.push_back(next);
        used[next] = 1;
        cur = next;
    }

    bool improved = true;
    while (improved) {
        improved = false;
        for (std::size_t i = 0; i + 2 < m; ++i) {
            for (std::size_t j = i + 2; j < m; ++j) {
                if (i == 0 && j == m - 1) continue;  // edges share node t[0]
                const std::size_t a = t[i], b = t[i + 1], cc = t[j], d = t[(j + 1) % m];
                const double delta = c(a, cc) + c(b, d) - c(a, b) - c(cc, d);
                if (delta < -1e-10) {
                    std::reverse(t.begin() + static_cast<std::ptrdiff_t>(i + 1),
                                 t.begin() + static_cast<std::ptrdiff_t>(j + 1));
                    improved = true;
                }
            }
        }
    }

    for (std::size_t i = 0; i < m; ++i) {
        if (c.is_forbidden(t[i], t[(i + 1) % m])) throw_infeasible(m, cons.forbidden_edges.size());
    }
    std::vector<int> cycle;
    cycle.reserve(m);
    for (std::size_t v : t) cycle.push_back(c.nodes[v]);
    return finish(dist, cycle, false);
}

Tour solve_heuristic(const Instance& inst, const SolveConstraints& cons, std::uint64_t seed) {
    return solve_heuristic(DistanceMatrix(inst), cons, seed);
}

Tour solve_auto(const DistanceMatrix& dist, const SolveConstraints& cons, std::uint64_t seed) {
    const std::size_t m = dist.size() - cons.removed_nodes.size();
    if (m <= kExactMaxNodes) return solve_exact(dist, cons);
    return solve_heuristic(dist, cons, seed);
}

}  // namespace tspsens
