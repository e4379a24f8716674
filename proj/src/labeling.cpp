#include "tspsens/labeling.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include <omp.h>

#include <json.hpp>

#include "tspsens/error.hpp"
#include "tspsens/io.hpp"

namespace tspsens {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

template <typename F>
Tour timed_solve(F&& solve, std::vector<double>& seconds) {
    const auto t0 = Clock::now();
    Tour t = solve();
    seconds.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
    return t;
}

void check_cap(const Instance& inst, std::size_t cap, Task task) {
    if (inst.size() > cap) {
        throw SizeLimitError("instance '" + inst.id() + "' has n=" + std::to_string(inst.size()) + "; " +
                             std::string(to_string(task)) + " labels support n <= " + std::to_string(cap));
    }
}

}  // namespace

double SensitivityLabels::total_seconds() const {
    return std::accumulate(solve_seconds.begin(), solve_seconds.end(), 0.0);
}

std::vector<Edge> tour_edges(std::span<const int> tour) {
    std::vector<Edge> out;
    out.reserve(tour.size());
    for (std::size_t t = 0; t < tour.size(); ++t) out.emplace_back(tour[t], tour[(t + 1) % tour.size()]);
    return out;
}

NodeRemovalLabels label_node_removal(const Instance& inst, const MetricOptions& metric) {
    check_cap(inst, kRemovalMaxNodes, Task::removal);
    const DistanceMatrix dist(inst, metric);
    SensitivityLabels out;
    out.instance_id = inst.id();
    out.task = Task::removal;
    out.solve_seconds.reserve(inst.size() + 1);

    const Tour base = timed_solve([&] { return solve_exact(dist); }, out.solve_seconds);
    out.base_length = base.length;
    out.base_tour = base.order;
    out.deltas_pct.reserve(inst.size());
    for (std::size_t i = 0; i < inst.size(); ++i) {
        SolveConstraints cons;
        cons.removed_nodes.insert(static_cast<int>(i));
        try {
            const Tour t = timed_solve([&] { return solve_exact(dist, cons); }, out.solve_seconds);
            out.deltas_pct.push_back(100.0 * (base.length - t.length) / base.length);
        } catch (const Error& e) {
            throw Error("instance '" + inst.id() + "', removal candidate " + std::to_string(i) + ": " + e.what());
        }
    }
    return out;
}

EdgeForbidLabels label_edge_forbid(const Instance& inst, const MetricOptions& metric) {
    check_cap(inst, kForbidMaxNodes, Task::forbid);
    const DistanceMatrix dist(inst, metric);
    SensitivityLabels out;
    out.instance_id = inst.id();
    out.task = Task::forbid;
    out.solve_seconds.reserve(inst.size() + 1);

    const Tour base = timed_solve([&] { return solve_exact(dist); }, out.solve_seconds);
    out.base_length = base.length;
    out.base_tour = base.order;
    const auto edges = tour_edges(base.order);
    out.deltas_pct.reserve(edges.size());
    for (std::size_t t = 0; t < edges.size(); ++t) {
        SolveConstraints cons;
        cons.forbidden_edges.insert(edges[t]);
        try {
            const Tour forced = timed_solve([&] { return solve_exact(dist, cons); }, out.solve_seconds);
            out.deltas_pct.push_back(100.0 * (forced.length - base.length) / base.length);
        } catch (const Error& e) {
            throw Error("instance '" + inst.id() + "', forbid candidate " + std::to_string(t) + ": " + e.what());
        }
    }
    return out;
}

SensitivityLabels label_instance(const Instance& inst, Task task, const MetricOptions& metric) {
    return task == Task::removal ? label_node_removal(inst, metric) : label_edge_forbid(inst, metric);
}

namespace {

LabelOutcome label_one(const Instance& inst, Task task, const MetricOptions& metric) {
    LabelOutcome o;
    o.instance_id = inst.id();
    try {
        o.labels = label_instance(inst, task, metric);
    } catch (const std::exception& e) {
        o.error = e.what();
    }
    return o;
}

}  // namespace

std::vector<LabelOutcome> label_batch_serial(std::span<const Instance> batch, Task task, const MetricOptions& metric) {
    std::vector<LabelOutcome> out;
    out.reserve(batch.size());
    for (const auto& inst : batch) out.push_back(label_one(inst, task, metric));
    return out;
}

std::vector<LabelOutcome> label_batch_parallel(std::span<const Instance> batch, Task task, int workers,
                                               const MetricOptions& metric) {
    std::vector<LabelOutcome> out(batch.size());
    const auto count = static_cast<std::ptrdiff_t>(batch.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(std::max(1, workers))
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        out[static_cast<std::size_t>(i)] = label_one(batch[static_cast<std::size_t>(i)], task, metric);
    }
    return out;
}

const SensitivityLabels& LabelFile::find(const std::string& instance_id) const {
    for (const auto& r : records) {
        if (r.instance_id == instance_id) return r;
    }
    throw AlignmentError("no labels for instance '" + instance_id + "'");
}

std::string labels_header_line(Task task, const std::string& dataset_checksum) {
    json h = {{"kind", "labels"}, {"version", 1}, {"task", to_string(task)}, {"dataset_checksum", dataset_checksum}};
    return h.dump();
}

std::string labels_to_json_line(const SensitivityLabels& l) {
    json j = {{"instance_id", l.instance_id},     {"task", to_string(l.task)},   {"base_length", l.base_length},
              {"base_tour", l.base_tour},         {"deltas_pct", l.deltas_pct}, {"solve_seconds", l.solve_seconds}};
    return j.dump();
}

SensitivityLabels labels_from_json_line(const std::string& line) {
    try {
        const json j = json::parse(line);
        SensitivityLabels l;
        l.instance_id = j.at("instance_id").get<std::string>();
        l.task = parse_task(j.at("task").get<std::string>());
        l.base_length = j.at("base_length").get<double>();
        l.base_tour = j.at("base_tour").get<std::vector<int>>();
        l.deltas_pct = j.at("deltas_pct").get<std::vector<double>>();
        l.solve_seconds = j.value("solve_seconds", std::vector<double>{});
        if (l.deltas_pct.size() != l.base_tour.size()) {
            throw FormatError("label record '" + l.instance_id + "': deltas and tour lengths differ");
        }
        return l;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed label record: ") + e.what());
    }
}

LabelFile read_labels(const std::filesystem::path& path) {
    const auto lines = io::read_lines(path);
    if (lines.empty()) throw FormatError("label file " + path.string() + " is empty (missing header)");
    LabelFile f;
    try {
        const json h = json::parse(lines.front());
        if (h.value("kind", "") != "labels") throw FormatError("label file " + path.string() + " has no labels header");
        if (h.value("version", 0) != 1) throw FormatError("unsupported label file version");
        f.task = parse_task(h.at("task").get<std::string>());
        f.dataset_checksum = h.value("dataset_checksum", "");
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed label header: ") + e.what());
    }
    for (std::size_t i = 1; i < lines.size(); ++i) {
        auto rec = labels_from_json_line(lines[i]);
        if (rec.task != f.task) throw FormatError("label record '" + rec.instance_id + "' has the wrong task");
        f.records.push_back(std::move(rec));
    }
    return f;
}

void write_labels(const std::filesystem::path& path, const LabelFile& file) {
    std::string buf = labels_header_line(file.task, file.dataset_checksum) + "\n";
    for (const auto& r : file.records) buf += labels_to_json_line(r) + "\n";
    io::write_file(path, buf);
}

LabelRunSummary label_dataset(std::span<const Instance> dataset, const std::filesystem::path& out,
                              const LabelRunOptions& opts) {
    LabelRunSummary summary;
    summary.total = dataset.size();

    std::unordered_set<std::string> done;
    const bool exists = std::filesystem::exists(out) && std::filesystem::file_size(out) > 0;
    if (exists && opts.resume) {
        const LabelFile prior = read_labels(out);
        if (prior.task != opts.task) throw AlignmentError("existing " + out.string() + " holds a different task");
        if (prior.dataset_checksum != opts.dataset_checksum) {
            throw AlignmentError("existing " + out.string() + " was produced from a different dataset");
        }
        for (const auto& r : prior.records) done.insert(r.instance_id);
    } else {
        io::write_file(out, labels_header_line(opts.task, opts.dataset_checksum) + "\n");
    }

    std::vector<Instance> todo;
    for (const auto& inst : dataset) {
        if (done.contains(inst.id())) {
            ++summary.skipped;
        } else {
            todo.push_back(inst);
        }
    }

    std::ofstream writer(out, std::ios::app);
    if (!writer) throw IoError("cannot append to " + out.string());
    const std::size_t chunk = std::max<std::size_t>(1, opts.chunk);
    for (std::size_t start = 0; start < todo.size(); start += chunk) {
        const auto len = std::min(chunk, todo.size() - start);
        const auto batch = std::span<const Instance>(todo).subspan(start, len);
        const auto results = opts.workers > 1 ? label_batch_parallel(batch, opts.task, opts.workers, opts.metric)
                                              : label_batch_serial(batch, opts.task, opts.metric);
        for (const auto& r : results) {
            if (r.labels) {
                writer << labels_to_json_line(*r.labels) << '\n';
                ++summary.labeled;
            } else {
                summary.failures.emplace_back(r.instance_id, r.error);
            }
        }
        writer.flush();
    }
    writer.close();

    std::vector<double> per_instance;
    for (const auto& r : read_labels(out).records) per_instance.push_back(r.total_seconds());
    if (!per_instance.empty()) {
        summary.mean_seconds_per_instance =
            std::accumulate(per_instance.begin(), per_instance.end(), 0.0) / static_cast<double>(per_instance.size());
        std::sort(per_instance.begin(), per_instance.end());
        const std::size_t mid = per_instance.size() / 2;
        summary.median_seconds_per_instance = per_instance.size() % 2 == 1
                                                  ? per_instance[mid]
                                                  : 0.5 * (per_instance[mid - 1] + per_instance[mid]);
    }
    return summary;
}

}  // namespace tspsens
