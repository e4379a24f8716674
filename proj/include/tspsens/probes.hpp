#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tspsens/autodiff.hpp"
#include "tspsens/evaluation.hpp"
#include "tspsens/matrix.hpp"
#include "tspsens/task.hpp"

namespace tspsens {

enum class ProbeFamily { linear, deepsets, settransformer };
enum class Objective { regression, hard_ce, soft_ce };
enum class Selection { val_loss, val_top1 };

std::string_view to_string(ProbeFamily f);
std::string_view to_string(Objective o);
std::string_view to_string(Selection s);
ProbeFamily parse_family(std::string_view s);
Objective parse_objective(std::string_view s);
Selection parse_selection(std::string_view s);

/// Probe hyperparameters. `depth` counts phi layers for DeepSets and encoder
/// blocks for the transformer; linear ignores the architecture fields.
struct ProbeConfig {
    ProbeFamily family = ProbeFamily::linear;
    Objective objective = Objective::regression;
    double tau = 2.0;
    std::size_t width = 64;
    std::size_t depth = 2;
    std::size_t heads = 4;
    std::size_t ff_width = 128;
    double dropout = 0.1;
    double lr = 1e-3;
    double weight_decay = 0.0;
    std::size_t epochs = 50;
    /// Instances per optimizer step.
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    /// Defaults to val_loss for regression and val_top1 for the CE objectives.
    std::optional<Selection> selection;

    Selection resolved_selection() const;
    /// Throws ValidationError for tau <= 0, dropout outside [0,1), heads not
    /// dividing width, zero width/batch size.
    void validate() const;

    /// Best configurations reported for each family and task at TSP100 scale.
    static ProbeConfig reference_defaults(ProbeFamily family, Task task);
};

/// Named parameter blocks in a fixed order.
struct Parameters {
    std::vector<std::string> names;
    std::vector<Matrix> values;

    void add(std::string name, Matrix m);
    const Matrix& get(std::string_view name) const;
    std::size_t count() const;
    friend bool operator==(const Parameters&, const Parameters&) = default;
};

/// Seeded fan-in uniform initialization: U(-1/sqrt(fan_in), 1/sqrt(fan_in))
/// for affine weights and biases; layer-norm gains 1 and shifts 0.
Parameters init_parameters(const ProbeConfig& config, std::size_t input_dim, std::uint64_t seed);

/// Records the probe's forward pass on `tape`. `vars[k]` must be the leaf for
/// `params.values[k]`. Dropout is active only when `dropout_rng` is non-null.
ad::Var probe_forward(ad::Tape& tape, std::span<const ad::Var> vars, const Parameters& params,
                      const ProbeConfig& config, const Matrix& features, Rng* dropout_rng);

/// s_i = w . x_i + b
std::vector<double> score_linear(const Parameters& params, const Matrix& features);
/// h_i = phi(x_i), hbar = mean h, s_i = rho([h_i, hbar]).
std::vector<double> score_deepsets(const Parameters& params, const ProbeConfig& config, const Matrix& features);
/// Post-norm self-attention encoder without positional information, shared
/// linear head.
std::vector<double> score_settransformer(const Parameters& params, const ProbeConfig& config,
                                         const Matrix& features);
/// Dispatches on config.family. Inference mode.
std::vector<double> score_probe(const Parameters& params, const ProbeConfig& config, const Matrix& features);

struct TargetScale {
    double mean = 0.0;
    double std = 1.0;
};

struct LossResult {
    double loss = 0.0;
    /// d loss / d scores.
    std::vector<double> grad;
};

/// regression: mean squared error against standardized deltas (needs `target`).
/// hard_ce: -log softmax(scores)[argmax delta], ties to the lowest index.
/// soft_ce: cross-entropy between softmax(delta / tau) and softmax(scores).
LossResult compute_loss(Objective objective, std::span<const double> scores, std::span<const double> deltas,
                        const TargetScale* target, double tau);

/// Feature statistics from the training split.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> std;
    /// Features whose train variance was zero (std clamped to 1).
    std::vector<std::size_t> flagged;
    std::optional<TargetScale> target;

    static Standardizer fit(std::span<const Matrix* const> train_features,
                            std::span<const std::vector<double>* const> train_targets, bool fit_target);

    Matrix apply(const Matrix& raw) const;
    double standardize_target(double y) const;
    double unstandardize_target(double z) const;
};

/// Disjoint instance-level split.
struct SplitSpec {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;

    const std::vector<std::string>& get(std::string_view name) const;
};

/// Seeded shuffle then partition by `ratios` (train, val, test), which must
/// sum to 1. Sizes are round(r * N) for train and val; test takes the rest.
SplitSpec make_splits(std::span<const std::string> ids, std::array<double, 3> ratios, std::uint64_t seed);

void write_splits(const std::filesystem::path& path, const SplitSpec& s);
SplitSpec read_splits(const std::filesystem::path& path);

/// Features and exact deltas for one instance.
struct ProbeExample {
    std::string instance_id;
    Matrix features;
    std::vector<double> deltas;
};

/// Loss on one instance and its gradient for every parameter block.
double loss_and_gradients(const Parameters& params, const ProbeConfig& config, const Matrix& features,
                          std::span<const double> deltas, const TargetScale* target, Parameters* grads,
                          Rng* dropout_rng = nullptr);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_top1 = 0.0;
};

/// A probe with frozen parameters. Scoring is deterministic.
struct TrainedProbe {
    ProbeConfig config;
    Task task = Task::removal;
    std::size_t input_dim = 0;
    Parameters params;
    Standardizer standardizer;
    std::vector<EpochRecord> curve;
    Selection selection = Selection::val_loss;
    /// Epoch whose parameters were kept (0 = initialization).
    std::size_t best_epoch = 0;

    /// Standardizes raw features, runs the model, and unstandardizes
    /// regression outputs back to percent units.
    std::vector<double> score(const Matrix& raw_features) const;
};

/// AdamW (beta1 0.9, beta2 0.999, eps 1e-8, decoupled weight decay) over
/// shuffled instance batches. Returns the parameters of the best validation
/// epoch. Throws NumericError on a non-finite loss.
TrainedProbe train_probe(const ProbeConfig& config, Task task, std::span<const ProbeExample> examples,
                         const SplitSpec& splits);

/// Metrics of a trained probe on the listed examples.
EvalReport evaluate_probe(const TrainedProbe& probe, std::span<const ProbeExample> examples,
                          const std::vector<std::string>& ids, const std::string& method);

struct SeedResult {
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double top1 = 0.0;
    double top5 = 0.0;
    double rho = 0.0;
};

struct MultiSeedReport {
    std::vector<SeedResult> runs;
    double mean_top1 = 0.0, std_top1 = 0.0;
    double mean_top5 = 0.0, std_top5 = 0.0;
    double mean_rho = 0.0, std_rho = 0.0;
    std::size_t failed = 0;
};

/// Trains one probe per seed (runs in parallel across `workers`), evaluates
/// each on the test split, and aggregates mean and population std over the
/// successful runs.
MultiSeedReport train_multiseed(const ProbeConfig& config, Task task, std::span<const ProbeExample> examples,
                                const SplitSpec& splits, std::span<const std::uint64_t> seeds, int workers = 1);

inline constexpr int kProbeFormatVersion = 1;

std::string probe_to_json(const TrainedProbe& probe);
TrainedProbe probe_from_json(const std::string& text);
void save_probe(const std::filesystem::path& path, const TrainedProbe& probe);
TrainedProbe load_probe(const std::filesystem::path& path);

}  // namespace tspsens
