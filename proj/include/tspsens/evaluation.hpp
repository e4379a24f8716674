#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "tspsens/baselines.hpp"
#include "tspsens/labeling.hpp"
#include "tspsens/task.hpp"

namespace tspsens {

/// Candidates whose delta is within `tol` of the maximum delta.
std::vector<std::size_t> best_candidates(std::span<const double> deltas, double tol = 1e-9);

/// Indices of the k highest scores, ties to the lower index.
std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t k);

/// Index of the highest value, ties to the lower index.
std::size_t argmax_lowest(std::span<const double> values);

/// 1 iff any tied-best candidate is among the k highest scores.
/// Throws ValidationError for k > m or misaligned inputs.
int topk_hit(std::span<const double> scores, std::span<const double> deltas, std::size_t k);

/// Average (fractional) ranks, 1-based, ascending by value.
std::vector<double> fractional_ranks(std::span<const double> values);

struct SpearmanResult {
    double rho = 0.0;
    /// Set when either input is constant; rho is then 0.
    bool undefined = false;
};

/// Pearson correlation of fractional ranks. Requires m >= 2.
SpearmanResult spearman_rho(std::span<const double> scores, std::span<const double> deltas);

/// Per-instance standardization; a zero-variance vector maps to zeros.
std::vector<double> zscore(std::span<const double> v);

enum class EnsembleMode { zscore, raw };

struct EnsembleSpec {
    std::string method_a;
    std::string method_b;
    EnsembleMode mode = EnsembleMode::zscore;
    double alpha = 0.5;
    /// Candidate weights for select_alpha: {0, 0.1, ..., 1.0} by default.
    std::vector<double> grid = default_alpha_grid();

    static std::vector<double> default_alpha_grid();
    std::string name() const;
};

/// alpha * a + (1 - alpha) * b after optional per-instance z-scoring.
CandidateScores ensemble_scores(const EnsembleSpec& spec, const CandidateScores& a, const CandidateScores& b);

/// One instance's inputs to ensemble selection.
struct EnsembleExample {
    const CandidateScores* a = nullptr;
    const CandidateScores* b = nullptr;
    const SensitivityLabels* labels = nullptr;
};

/// Grid weight maximizing mean top-1 over `val`; ties go to the smaller alpha.
/// Throws ValidationError when `val` is empty.
double select_alpha(const EnsembleSpec& spec, std::span<const EnsembleExample> val);

struct InstanceMetrics {
    std::string instance_id;
    std::size_t candidates = 0;
    int top1 = 0;
    int top5 = 0;
    double rho = 0.0;
    bool rho_undefined = false;
    /// Number of candidates tied for the best delta.
    std::size_t best_ties = 1;
};

InstanceMetrics evaluate_instance(const CandidateScores& scores, const SensitivityLabels& labels);

struct EvalReport {
    std::string method;
    Task task = Task::removal;
    std::vector<InstanceMetrics> instances;
    double mean_top1 = 0.0;
    double mean_top5 = 0.0;
    double mean_rho = 0.0;
    std::size_t undefined_rho = 0;
    std::size_t tied_best = 0;
    /// k / n averaged over instances.
    double chance_top1 = 0.0;
    double chance_top5 = 0.0;
    /// Set when the report comes from a grid-selected ensemble.
    std::optional<double> alpha;
};

/// Scores every instance listed in `ids` (all scored instances when empty).
/// Throws AlignmentError listing every id without labels or scores.
EvalReport evaluate_method(std::span<const CandidateScores> scores, const LabelFile& labels,
                           const std::set<std::string>& ids = {});

EvalReport aggregate(std::string method, Task task, std::vector<InstanceMetrics> rows);

/// Aggregate table (one row per report) followed by per-instance tables.
std::string format_table(std::span<const EvalReport> reports, bool per_instance = true);
/// One JSON object per line: a summary line per method, then per-instance lines.
std::string format_records(std::span<const EvalReport> reports);
/// Machine-readable summary: JSON array of aggregate blocks.
std::string format_summary_json(std::span<const EvalReport> reports);

}  // namespace tspsens
