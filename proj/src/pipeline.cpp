#include "tspsens/pipeline.hpp"

#include <unordered_map>

#include "tspsens/error.hpp"

namespace tspsens {

Matrix candidate_features(const Instance& inst, const SensitivityLabels& labels, const ActivationCache* cache) {
    if (cache) return build_candidate_features(*cache, inst, labels.task, labels.base_tour);
    return build_geometry_features(inst, labels.task, labels.base_tour);
}

std::vector<ProbeExample> build_probe_examples(std::span<const Instance> dataset, const LabelFile& labels,
                                               const ActivationCache* cache) {
    std::unordered_map<std::string, const SensitivityLabels*> by_id;
    for (const auto& r : labels.records) by_id.emplace(r.instance_id, &r);
    std::vector<ProbeExample> out;
    out.reserve(labels.records.size());
    for (const auto& inst : dataset) {
        const auto it = by_id.find(inst.id());
        if (it == by_id.end()) continue;
        out.push_back({inst.id(), candidate_features(inst, *it->second, cache), it->second->deltas_pct});
    }
    return out;
}

std::vector<CandidateScores> score_dataset_with_probe(const TrainedProbe& probe, std::span<const Instance> dataset,
                                                      const LabelFile& labels, const ActivationCache* cache,
                                                      const std::string& method) {
    if (probe.task != labels.task) {
        throw AlignmentError("probe was trained for the " + std::string(to_string(probe.task)) +
                             " task but the labels are for " + std::string(to_string(labels.task)));
    }
    std::vector<CandidateScores> out;
    for (const auto& ex : build_probe_examples(dataset, labels, cache)) {
        if (ex.features.cols != probe.input_dim) {
            throw AlignmentError("probe expects " + std::to_string(probe.input_dim) + " features, source gives " +
                                 std::to_string(ex.features.cols));
        }
        out.push_back({ex.instance_id, probe.task, method, probe.score(ex.features)});
    }
    return out;
}

}  // namespace tspsens
