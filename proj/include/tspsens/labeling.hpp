#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tspsens/instance.hpp"
#include "tspsens/solver.hpp"
#include "tspsens/task.hpp"

namespace tspsens {

/// Largest instance each task can label exactly. Removal is bounded by the
/// base solve on all n nodes, not by the (n-1)-node re-solves.
inline constexpr std::size_t kRemovalMaxNodes = kExactMaxNodes;
inline constexpr std::size_t kForbidMaxNodes = kExactMaxNodes;

/// Ground-truth percent deltas for one instance and one task.
///
/// removal: deltas_pct[i] = 100 * (L* - L*(without i)) / L*
/// forbid:  deltas_pct[t] = 100 * (L*(forbid e_t) - L*) / L*, where e_t is
///          the edge (base_tour[t], base_tour[t+1]) with wrap-around.
///
/// solve_seconds holds n + 1 wall-clock timings: the base solve first, then
/// one per candidate.
struct SensitivityLabels {
    std::string instance_id;
    Task task = Task::removal;
    double base_length = 0.0;
    std::vector<int> base_tour;
    std::vector<double> deltas_pct;
    std::vector<double> solve_seconds;

    double total_seconds() const;
};

using NodeRemovalLabels = SensitivityLabels;
using EdgeForbidLabels = SensitivityLabels;

/// Tour edges of a canonical tour, in candidate order.
std::vector<Edge> tour_edges(std::span<const int> tour);

NodeRemovalLabels label_node_removal(const Instance& inst, const MetricOptions& metric = {});
EdgeForbidLabels label_edge_forbid(const Instance& inst, const MetricOptions& metric = {});
SensitivityLabels label_instance(const Instance& inst, Task task, const MetricOptions& metric = {});

/// Result of labeling one instance inside a batch: labels or an error message.
struct LabelOutcome {
    std::string instance_id;
    std::optional<SensitivityLabels> labels;
    std::string error;
};

/// Reference kernel: one instance after another.
std::vector<LabelOutcome> label_batch_serial(std::span<const Instance> batch, Task task,
                                             const MetricOptions& metric = {});

/// OpenMP kernel over instances. Output order matches input order and is
/// identical to label_batch_serial except for timing fields.
std::vector<LabelOutcome> label_batch_parallel(std::span<const Instance> batch, Task task, int workers,
                                               const MetricOptions& metric = {});

// Label files: a header line {"kind":"labels","version":1,"task",
// "dataset_checksum"} followed by one record per instance.

struct LabelFile {
    Task task = Task::removal;
    std::string dataset_checksum;
    std::vector<SensitivityLabels> records;

    /// Throws AlignmentError if the id is absent.
    const SensitivityLabels& find(const std::string& instance_id) const;
};

LabelFile read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const LabelFile& file);
std::string labels_header_line(Task task, const std::string& dataset_checksum);
std::string labels_to_json_line(const SensitivityLabels& labels);
SensitivityLabels labels_from_json_line(const std::string& line);

struct LabelRunSummary {
    std::size_t total = 0;
    std::size_t labeled = 0;
    std::size_t skipped = 0;
    std::vector<std::pair<std::string, std::string>> failures;
    double mean_seconds_per_instance = 0.0;
    double median_seconds_per_instance = 0.0;
};

struct LabelRunOptions {
    Task task = Task::removal;
    int workers = 1;
    bool resume = true;
    std::size_t chunk = 64;
    std::string dataset_checksum;
    MetricOptions metric;
};

/// Labels a dataset into `out`, appending in input order through one writer.
/// With resume, ids already present in `out` are skipped; the existing
/// header must agree on task and dataset checksum.
LabelRunSummary label_dataset(std::span<const Instance> dataset, const std::filesystem::path& out,
                              const LabelRunOptions& opts);

}  // namespace tspsens
