#include "tspsens/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include <json.hpp>

#include "tspsens/error.hpp"
#include "tspsens/io.hpp"

namespace tspsens {

using nlohmann::json;

namespace {

void require_full_tour(const Instance& inst, std::span<const int> tour) {
    if (tour.size() != inst.size()) {
        throw ValidationError("instance '" + inst.id() + "': base tour has " + std::to_string(tour.size()) +
                              " nodes, expected " + std::to_string(inst.size()));
    }
    std::vector<char> seen(inst.size(), 0);
    for (int v : tour) {
        if (v < 0 || static_cast<std::size_t>(v) >= inst.size() || seen[v]) {
            throw ValidationError("instance '" + inst.id() + "': base tour is not a permutation");
        }
        seen[v] = 1;
    }
}

std::vector<double> nn_distances(const DistanceMatrix& d) {
    const std::size_t n = d.size();
    std::vector<double> out(n, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j) out[i] = std::min(out[i], d(i, j));
        }
    }
    return out;
}

CandidateScores make_scores(const Instance& inst, Task task, const char* method, std::vector<double> s) {
    return CandidateScores{inst.id(), task, method, std::move(s)};
}

}  // namespace

CandidateScores score_nn_distance(const Instance& inst, const MetricOptions& metric) {
    return make_scores(inst, Task::removal, method::kNearestNeighbor, nn_distances(DistanceMatrix(inst, metric)));
}

CandidateScores score_splice(const Instance& inst, std::span<const int> base_tour, const MetricOptions& metric) {
    require_full_tour(inst, base_tour);
    const DistanceMatrix d(inst, metric);
    const std::size_t n = base_tour.size();
    const double base = tour_length(d, base_tour);
    std::vector<double> s(n, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        const int prev = base_tour[(t + n - 1) % n];
        const int node = base_tour[t];
        const int next = base_tour[(t + 1) % n];
        s[node] = 100.0 * (d(prev, node) + d(node, next) - d(prev, next)) / base;
    }
    return make_scores(inst, Task::removal, method::kSplice, std::move(s));
}

CandidateScores score_detour(const Instance& inst, std::span<const int> base_tour, const MetricOptions& metric) {
    require_full_tour(inst, base_tour);
    const DistanceMatrix d(inst, metric);
    const std::size_t n = base_tour.size();
    std::vector<double> s(n);
    for (std::size_t t = 0; t < n; ++t) {
        const int u = base_tour[t];
        const int v = base_tour[(t + 1) % n];
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t w = 0; w < n; ++w) {
            if (static_cast<int>(w) == u || static_cast<int>(w) == v) continue;
            best = std::min(best, d(u, w) + d(w, v) - d(u, v));
        }
        s[t] = best;
    }
    return make_scores(inst, Task::forbid, method::kDetour, std::move(s));
}

CandidateScores score_two_opt_repair(const Instance& inst, std::span<const int> base_tour,
                                     const MetricOptions& metric) {
    require_full_tour(inst, base_tour);
    const DistanceMatrix d(inst, metric);
    const std::size_t n = base_tour.size();
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> s(n, inf);
    for (std::size_t i = 0; i < n; ++i) {
        const int a_i = base_tour[i];
        const int b_i = base_tour[(i + 1) % n];
        for (std::size_t j = 0; j < n; ++j) {
            // Partner edges sharing a node with edge i cannot take part in a 2-opt move.
            if (j == i || j == (i + 1) % n || (j + 1) % n == i) continue;
            const int a_j = base_tour[j];
            const int b_j = base_tour[(j + 1) % n];
            // With both edges oriented along the tour, only a_i-a_j / b_i-b_j
            // reconnects into one cycle; a_i-b_j / b_i-a_j splits it in two.
            const double gain = d(a_i, a_j) + d(b_i, b_j) - d(a_i, b_i) - d(a_j, b_j);
            s[i] = std::min(s[i], gain);
        }
    }
    double max_finite = 0.0;
    for (double& v : s) {
        if (std::isfinite(v)) {
            v = std::max(0.0, v);
            max_finite = std::max(max_finite, v);
        }
    }
    for (double& v : s) {
        if (!std::isfinite(v)) v = max_finite + 1.0;
    }
    return make_scores(inst, Task::forbid, method::kTwoOpt, std::move(s));
}

CandidateScores score_oracle(const SensitivityLabels& labels) {
    return CandidateScores{labels.instance_id, labels.task, method::kOracle, labels.deltas_pct};
}

Matrix build_geometry_features(const Instance& inst, Task task, std::span<const int> base_tour,
                               const MetricOptions& metric) {
    const DistanceMatrix d(inst, metric);
    const auto pts = d.scaled_coords();
    const std::size_t n = inst.size();
    if (task == Task::removal) {
        const auto nn = nn_distances(d);
        Matrix f(n, kGeometryNodeDim);
        for (std::size_t i = 0; i < n; ++i) {
            f(i, 0) = pts[i].x;
            f(i, 1) = pts[i].y;
            f(i, 2) = nn[i];
        }
        return f;
    }
    if (base_tour.empty()) throw ValidationError("forbid-task geometry features need a base tour");
    require_full_tour(inst, base_tour);
    Matrix f(n, kGeometryEdgeDim);
    for (std::size_t t = 0; t < n; ++t) {
        const auto& pu = pts[base_tour[t]];
        const auto& pv = pts[base_tour[(t + 1) % n]];
        const double dx = pv.x - pu.x;
        const double dy = pv.y - pu.y;
        const double row[kGeometryEdgeDim] = {pu.x, pu.y, pv.x, pv.y, dx, dy, std::abs(dx), std::abs(dy),
                                              std::hypot(dx, dy)};
        std::copy(std::begin(row), std::end(row), f.row(t).begin());
    }
    return f;
}

bool is_baseline_method(const std::string& m) {
    return m == method::kNearestNeighbor || m == method::kSplice || m == method::kDetour || m == method::kTwoOpt ||
           m == method::kOracle;
}

Task baseline_task(const std::string& m) {
    if (m == method::kNearestNeighbor || m == method::kSplice) return Task::removal;
    if (m == method::kDetour || m == method::kTwoOpt) return Task::forbid;
    throw ValidationError("'" + m + "' is not a task-specific baseline");
}

CandidateScores run_baseline(const std::string& m, const Instance& inst, const SensitivityLabels* labels) {
    if (m == method::kNearestNeighbor) return score_nn_distance(inst);
    if (!labels) throw ValidationError("method '" + m + "' needs labels for instance '" + inst.id() + "'");
    if (m == method::kOracle) return score_oracle(*labels);
    if (m == method::kSplice) return score_splice(inst, labels->base_tour);
    if (m == method::kDetour) return score_detour(inst, labels->base_tour);
    if (m == method::kTwoOpt) return score_two_opt_repair(inst, labels->base_tour);
    throw ValidationError("unknown baseline method '" + m + "'");
}

namespace {

std::unordered_map<std::string, const SensitivityLabels*> index_labels(const LabelFile* labels) {
    std::unordered_map<std::string, const SensitivityLabels*> idx;
    if (labels) {
        for (const auto& r : labels->records) idx.emplace(r.instance_id, &r);
    }
    return idx;
}

const SensitivityLabels* lookup(const std::unordered_map<std::string, const SensitivityLabels*>& idx,
                                const std::string& id) {
    const auto it = idx.find(id);
    return it == idx.end() ? nullptr : it->second;
}

}  // namespace

std::vector<CandidateScores> run_baseline_serial(const std::string& m, std::span<const Instance> dataset,
                                                 const LabelFile* labels) {
    const auto idx = index_labels(labels);
    std::vector<CandidateScores> out;
    out.reserve(dataset.size());
    for (const auto& inst : dataset) out.push_back(run_baseline(m, inst, lookup(idx, inst.id())));
    return out;
}

std::vector<CandidateScores> run_baseline_parallel(const std::string& m, std::span<const Instance> dataset,
                                                   const LabelFile* labels, int workers) {
    const auto idx = index_labels(labels);
    std::vector<CandidateScores> out(dataset.size());
    std::vector<std::string> errors(dataset.size());
    const auto count = static_cast<std::ptrdiff_t>(dataset.size());
#pragma omp parallel for schedule(static) num_threads(std::max(1, workers))
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        const auto k = static_cast<std::size_t>(i);
        try {
            out[k] = run_baseline(m, dataset[k], lookup(idx, dataset[k].id()));
        } catch (const std::exception& e) {
            errors[k] = e.what();
        }
    }
    for (const auto& e : errors) {
        if (!e.empty()) throw ValidationError(e);
    }
    return out;
}

ScoreFile read_scores(const std::filesystem::path& path) {
    const auto lines = io::read_lines(path);
    if (lines.empty()) throw FormatError("score file " + path.string() + " is empty (missing header)");
    ScoreFile f;
    try {
        const json h = json::parse(lines.front());
        if (h.value("kind", "") != "scores") throw FormatError("score file " + path.string() + " has no scores header");
        if (h.value("version", 0) != 1) throw FormatError("unsupported score file version");
        f.task = parse_task(h.at("task").get<std::string>());
        f.method = h.at("method").get<std::string>();
        f.dataset_checksum = h.value("dataset_checksum", "");
        for (std::size_t i = 1; i < lines.size(); ++i) {
            const json r = json::parse(lines[i]);
            CandidateScores s;
            s.instance_id = r.at("instance_id").get<std::string>();
            s.task = parse_task(r.at("task").get<std::string>());
            s.method = r.at("method").get<std::string>();
            s.scores = r.at("scores").get<std::vector<double>>();
            for (double v : s.scores) {
                if (!std::isfinite(v)) throw FormatError("non-finite score for instance '" + s.instance_id + "'");
            }
            f.records.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw FormatError("malformed score file " + path.string() + ": " + e.what());
    }
    return f;
}

void write_scores(const std::filesystem::path& path, const ScoreFile& file) {
    json h = {{"kind", "scores"},
              {"version", 1},
              {"task", to_string(file.task)},
              {"method", file.method},
              {"dataset_checksum", file.dataset_checksum}};
    std::string buf = h.dump() + "\n";
    for (const auto& s : file.records) {
        json r = {{"instance_id", s.instance_id}, {"task", to_string(s.task)}, {"method", s.method}, {"scores", s.scores}};
        buf += r.dump() + "\n";
    }
    io::write_file(path, buf);
}

}  // namespace tspsens
