#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tspsens/instance.hpp"
#include "tspsens/labeling.hpp"
#include "tspsens/matrix.hpp"
#include "tspsens/task.hpp"

namespace tspsens {

/// Per-candidate scores from any method, aligned to the task's candidate
/// order. Higher means "predicted more sensitive".
struct CandidateScores {
    std::string instance_id;
    Task task = Task::removal;
    std::string method;
    std::vector<double> scores;
};

namespace method {
inline constexpr const char* kNearestNeighbor = "baseline.nn";
inline constexpr const char* kSplice = "baseline.splice";
inline constexpr const char* kDetour = "baseline.detour";
inline constexpr const char* kTwoOpt = "baseline.2opt";
inline constexpr const char* kOracle = "oracle";
}  // namespace method

/// Nearest-neighbour distance per node, scaled units.
CandidateScores score_nn_distance(const Instance& inst, const MetricOptions& metric = {});

/// Shortcut gain d(prev,i) + d(i,next) - d(prev,next) per node, as a
/// percentage of the base tour length. `base_tour` must be optimal for the
/// scores to lower-bound the exact removal deltas.
CandidateScores score_splice(const Instance& inst, std::span<const int> base_tour, const MetricOptions& metric = {});

/// Cheapest two-hop bypass min_w d(u,w) + d(w,v) - d(u,v) per tour edge,
/// scaled units.
CandidateScores score_detour(const Instance& inst, std::span<const int> base_tour, const MetricOptions& metric = {});

/// Cheapest feasible 2-opt move removing each tour edge, clamped at 0,
/// scaled units. Only the reconnection that keeps a single cycle is
/// considered. An edge with no non-adjacent partner gets the instance's
/// largest finite score plus 1.
CandidateScores score_two_opt_repair(const Instance& inst, std::span<const int> base_tour,
                                     const MetricOptions& metric = {});

/// Scores equal to the exact deltas.
CandidateScores score_oracle(const SensitivityLabels& labels);

/// Representation-free candidate features in scaled units.
/// removal: (x, y, nn_dist); forbid: (x_u, y_u, x_v, y_v, dx, dy, |dx|, |dy|, |d|).
/// Throws ValidationError if the forbid task is requested without a tour.
Matrix build_geometry_features(const Instance& inst, Task task, std::span<const int> base_tour = {},
                               const MetricOptions& metric = {});

inline constexpr std::size_t kGeometryNodeDim = 3;
inline constexpr std::size_t kGeometryEdgeDim = 9;

/// True if `method` is one of the four heuristic baselines or the oracle.
bool is_baseline_method(const std::string& method);

/// Task a baseline method applies to.
Task baseline_task(const std::string& method);

/// Runs a baseline on one instance. Tour-based methods and the oracle read
/// the base tour / deltas from `labels`.
CandidateScores run_baseline(const std::string& method, const Instance& inst, const SensitivityLabels* labels);

/// Reference and OpenMP kernels over a dataset; labels are looked up by id.
std::vector<CandidateScores> run_baseline_serial(const std::string& method, std::span<const Instance> dataset,
                                                 const LabelFile* labels);
std::vector<CandidateScores> run_baseline_parallel(const std::string& method, std::span<const Instance> dataset,
                                                   const LabelFile* labels, int workers);

// Score files: header {"kind":"scores","version":1,"task","method",
// "dataset_checksum"} then one record per instance.

struct ScoreFile {
    Task task = Task::removal;
    std::string method;
    std::string dataset_checksum;
    std::vector<CandidateScores> records;
};

ScoreFile read_scores(const std::filesystem::path& path);
void write_scores(const std::filesystem::path& path, const ScoreFile& file);

}  // namespace tspsens
