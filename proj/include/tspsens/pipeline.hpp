#pragma once

#include <span>
#include <string>
#include <vector>

#include "tspsens/baselines.hpp"
#include "tspsens/instance.hpp"
#include "tspsens/labeling.hpp"
#include "tspsens/probes.hpp"
#include "tspsens/representations.hpp"

namespace tspsens {

/// Candidate features for one labeled instance: geometry features when
/// `cache` is null, cached embeddings otherwise.
Matrix candidate_features(const Instance& inst, const SensitivityLabels& labels, const ActivationCache* cache);

/// One example per instance that has labels, in dataset order. Throws
/// AlignmentError if the cache misses a labeled instance.
std::vector<ProbeExample> build_probe_examples(std::span<const Instance> dataset, const LabelFile& labels,
                                               const ActivationCache* cache);

/// Scores every labeled instance with a trained probe.
std::vector<CandidateScores> score_dataset_with_probe(const TrainedProbe& probe, std::span<const Instance> dataset,
                                                      const LabelFile& labels, const ActivationCache* cache,
                                                      const std::string& method);

}  // namespace tspsens
