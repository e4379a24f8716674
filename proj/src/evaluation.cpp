#include "tspsens/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "tspsens/error.hpp"

namespace tspsens {

using nlohmann::json;

namespace {

void require_aligned(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw ValidationError(std::string(what) + ": " + std::to_string(a) + " scores vs " + std::to_string(b) +
                              " labels");
    }
}

double mean_of(std::span<const double> v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::vector<std::size_t> best_candidates(std::span<const double> deltas, double tol) {
    std::vector<std::size_t> out;
    if (deltas.empty()) return out;
    const double mx = *std::max_element(deltas.begin(), deltas.end());
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        if (deltas[i] >= mx - tol) out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t k) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    k = std::min(k, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
    idx.resize(k);
    return idx;
}

std::size_t argmax_lowest(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

int topk_hit(std::span<const double> scores, std::span<const double> deltas, std::size_t k) {
    require_aligned(scores.size(), deltas.size(), "topk_hit");
    if (k == 0 || k > scores.size()) {
        throw ValidationError("top-k needs 1 <= k <= m (k=" + std::to_string(k) + ", m=" +
                              std::to_string(scores.size()) + ")");
    }
    const auto best = best_candidates(deltas);
    for (std::size_t i : top_k_indices(scores, k)) {
        if (std::binary_search(best.begin(), best.end(), i)) return 1;
    }
    return 0;
}

std::vector<double> fractional_ranks(std::span<const double> values) {
    const std::size_t m = values.size();
    std::vector<std::size_t> idx(m);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(m);
    std::size_t i = 0;
    while (i < m) {
        std::size_t j = i;
        while (j + 1 < m && values[idx[j + 1]] == values[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

SpearmanResult spearman_rho(std::span<const double> scores, std::span<const double> deltas) {
    require_aligned(scores.size(), deltas.size(), "spearman_rho");
    if (scores.size() < 2) throw ValidationError("Spearman correlation needs at least 2 candidates");
    const auto rx = fractional_ranks(scores);
    const auto ry = fractional_ranks(deltas);
    const double mx = mean_of(rx);
    const double my = mean_of(ry);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return {0.0, true};
    return {std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0), false};
}

std::vector<double> zscore(std::span<const double> v) {
    std::vector<double> out(v.begin(), v.end());
    if (out.empty()) return out;
    const double mu = mean_of(v);
    double var = 0.0;
    for (double x : v) var += (x - mu) * (x - mu);
    var /= static_cast<double>(v.size());
    const double sd = std::sqrt(var);
    for (double& x : out) x = sd > 0.0 ? (x - mu) / sd : 0.0;
    return out;
}

std::vector<double> EnsembleSpec::default_alpha_grid() {
    std::vector<double> g;
    for (int i = 0; i <= 10; ++i) g.push_back(i / 10.0);
    return g;
}

std::string EnsembleSpec::name() const {
    return "ensemble." + method_a + "+" + method_b + (mode == EnsembleMode::zscore ? ".zscore" : ".raw");
}

CandidateScores ensemble_scores(const EnsembleSpec& spec, const CandidateScores& a, const CandidateScores& b) {
    if (a.instance_id != b.instance_id || a.scores.size() != b.scores.size()) {
        throw AlignmentError("ensemble inputs disagree for instance '" + a.instance_id + "' / '" + b.instance_id + "'");
    }
    if (spec.alpha < 0.0 || spec.alpha > 1.0) throw ValidationError("ensemble alpha must lie in [0,1]");
    const auto va = spec.mode == EnsembleMode::zscore ? zscore(a.scores) : a.scores;
    const auto vb = spec.mode == EnsembleMode::zscore ? zscore(b.scores) : b.scores;
    CandidateScores out{a.instance_id, a.task, spec.name(), std::vector<double>(va.size())};
    for (std::size_t i = 0; i < va.size(); ++i) out.scores[i] = spec.alpha * va[i] + (1.0 - spec.alpha) * vb[i];
    return out;
}

double select_alpha(const EnsembleSpec& spec, std::span<const EnsembleExample> val) {
    if (val.empty()) throw ValidationError("alpha selection needs a non-empty validation set");
    auto grid = spec.grid;
    std::sort(grid.begin(), grid.end());
    double best_alpha = grid.front();
    double best_score = -1.0;
    for (double alpha : grid) {
        EnsembleSpec s = spec;
        s.alpha = alpha;
        double hits = 0.0;
        for (const auto& ex : val) {
            const auto mixed = ensemble_scores(s, *ex.a, *ex.b);
            hits += topk_hit(mixed.scores, ex.labels->deltas_pct, 1);
        }
        const double mean = hits / static_cast<double>(val.size());
        if (mean > best_score) {
            best_score = mean;
            best_alpha = alpha;
        }
    }
    return best_alpha;
}

InstanceMetrics evaluate_instance(const CandidateScores& scores, const SensitivityLabels& labels) {
    if (scores.scores.size() != labels.deltas_pct.size()) {
        throw AlignmentError("instance '" + labels.instance_id + "': " + std::to_string(scores.scores.size()) +
                             " scores vs " + std::to_string(labels.deltas_pct.size()) + " labels");
    }
    InstanceMetrics m;
    m.instance_id = labels.instance_id;
    m.candidates = labels.deltas_pct.size();
    m.top1 = topk_hit(scores.scores, labels.deltas_pct, 1);
    m.top5 = topk_hit(scores.scores, labels.deltas_pct, std::min<std::size_t>(5, m.candidates));
    const auto rho = spearman_rho(scores.scores, labels.deltas_pct);
    m.rho = rho.rho;
    m.rho_undefined = rho.undefined;
    m.best_ties = best_candidates(labels.deltas_pct).size();
    return m;
}

EvalReport aggregate(std::string method, Task task, std::vector<InstanceMetrics> rows) {
    EvalReport r;
    r.method = std::move(method);
    r.task = task;
    r.instances = std::move(rows);
    const double count = static_cast<double>(r.instances.size());
    for (const auto& m : r.instances) {
        r.mean_top1 += m.top1;
        r.mean_top5 += m.top5;
        r.mean_rho += m.rho;
        r.undefined_rho += m.rho_undefined ? 1 : 0;
        r.tied_best += m.best_ties > 1 ? 1 : 0;
        const double n = static_cast<double>(m.candidates);
        r.chance_top1 += 1.0 / n;
        r.chance_top5 += std::min(5.0, n) / n;
    }
    if (count > 0) {
        r.mean_top1 /= count;
        r.mean_top5 /= count;
        r.mean_rho /= count;
        r.chance_top1 /= count;
        r.chance_top5 /= count;
    }
    return r;
}

EvalReport evaluate_method(std::span<const CandidateScores> scores, const LabelFile& labels,
                           const std::set<std::string>& ids) {
    std::unordered_map<std::string, const CandidateScores*> by_id;
    for (const auto& s : scores) by_id.emplace(s.instance_id, &s);
    std::unordered_map<std::string, const SensitivityLabels*> label_by_id;
    for (const auto& l : labels.records) label_by_id.emplace(l.instance_id, &l);

    std::vector<std::string> wanted;
    if (ids.empty()) {
        for (const auto& s : scores) wanted.push_back(s.instance_id);
    } else {
        wanted.assign(ids.begin(), ids.end());
    }

    std::vector<std::string> missing;
    for (const auto& id : wanted) {
        if (!by_id.contains(id) || !label_by_id.contains(id)) missing.push_back(id);
    }
    if (!missing.empty()) {
        std::string msg = "coverage gap: " + std::to_string(missing.size()) + " instance(s) lack scores or labels:";
        for (const auto& id : missing) msg += " " + id;
        throw AlignmentError(msg);
    }

    std::vector<InstanceMetrics> rows;
    rows.reserve(wanted.size());
    for (const auto& id : wanted) rows.push_back(evaluate_instance(*by_id.at(id), *label_by_id.at(id)));
    const std::string method = scores.empty() ? std::string{} : scores.front().method;
    return aggregate(method, labels.task, std::move(rows));
}

namespace {

std::string fmt(double v, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return buf;
}

json summary_json(const EvalReport& r) {
    json j = {{"method", r.method},
              {"task", to_string(r.task)},
              {"instances", r.instances.size()},
              {"top1", r.mean_top1},
              {"top5", r.mean_top5},
              {"spearman", r.mean_rho},
              {"chance_top1", r.chance_top1},
              {"chance_top5", r.chance_top5},
              {"undefined_rho", r.undefined_rho},
              {"tied_best", r.tied_best}};
    if (r.alpha) j["alpha"] = *r.alpha;
    return j;
}

}  // namespace

std::string format_table(std::span<const EvalReport> reports, bool per_instance) {
    std::ostringstream out;
    std::size_t width = 6;
    for (const auto& r : reports) width = std::max(width, r.method.size());
    char line[512];
    std::snprintf(line, sizeof(line), "%-*s  %-7s  %5s  %6s  %6s  %8s  %6s  %6s  %s\n", static_cast<int>(width), "method",
                  "task", "n", "top1", "top5", "spearman", "ch@1", "ch@5", "alpha");
    out << line;
    for (const auto& r : reports) {
        std::snprintf(line, sizeof(line), "%-*s  %-7s  %5zu  %6s  %6s  %8s  %6s  %6s  %s\n", static_cast<int>(width),
                      r.method.c_str(), std::string(to_string(r.task)).c_str(), r.instances.size(),
                      fmt(r.mean_top1, 3).c_str(), fmt(r.mean_top5, 3).c_str(), fmt(r.mean_rho, 3).c_str(),
                      fmt(r.chance_top1, 3).c_str(), fmt(r.chance_top5, 3).c_str(),
                      r.alpha ? fmt(*r.alpha, 1).c_str() : "-");
        out << line;
    }
    if (per_instance) {
        for (const auto& r : reports) {
            out << "\n# " << r.method << " per instance\n";
            out << "instance_id\tm\ttop1\ttop5\tspearman\tflags\n";
            for (const auto& m : r.instances) {
                out << m.instance_id << '\t' << m.candidates << '\t' << m.top1 << '\t' << m.top5 << '\t' << fmt(m.rho)
                    << '\t' << (m.rho_undefined ? "rho_undefined" : "") << (m.best_ties > 1 ? " tied_best" : "")
                    << '\n';
            }
        }
    }
    return out.str();
}

std::string format_records(std::span<const EvalReport> reports) {
    std::string out;
    for (const auto& r : reports) {
        json s = summary_json(r);
        s["kind"] = "summary";
        out += s.dump() + "\n";
        for (const auto& m : r.instances) {
            json j = {{"kind", "instance"},  {"method", r.method}, {"instance_id", m.instance_id},
                      {"candidates", m.candidates}, {"top1", m.top1},     {"top5", m.top5},
                      {"spearman", m.rho},     {"rho_undefined", m.rho_undefined}, {"best_ties", m.best_ties}};
            out += j.dump() + "\n";
        }
    }
    return out;
}

std::string format_summary_json(std::span<const EvalReport> reports) {
    json arr = json::array();
    for (const auto& r : reports) arr.push_back(summary_json(r));
    return arr.dump(2) + "\n";
}

}  // namespace tspsens
