#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "tspsens/baselines.hpp"
#include "tspsens/error.hpp"
#include "tspsens/evaluation.hpp"
#include "tspsens/instance.hpp"
#include "tspsens/io.hpp"
#include "tspsens/labeling.hpp"
#include "tspsens/pipeline.hpp"
#include "tspsens/probes.hpp"
#include "tspsens/render.hpp"
#include "tspsens/representations.hpp"
#include "tspsens/service.hpp"

#ifndef TSPSENS_VERSION
#define TSPSENS_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tspsens;

namespace {

enum Exit { kOk = 0, kValidation = 1, kPartial = 2, kInternal = 3 };

fs::path data_dir() {
    const char* env = std::getenv("TSPSENS_DATA_DIR");
    return env && *env ? fs::path(env) : fs::path();
}

fs::path resolve(const std::string& p) {
    fs::path path(p);
    if (path.empty() || path.is_absolute()) return path;
    const auto base = data_dir();
    return base.empty() ? path : base / path;
}

/// Run record written next to each output as "<out>.manifest.json".
struct Manifest {
    std::string command;
    json config = json::object();
    json inputs = json::object();
    json outputs = json::object();

    void input(const std::string& role, const fs::path& p) {
        inputs[role] = {{"path", p.string()}, {"checksum", io::checksum_file(p)}};
    }
    void output(const std::string& role, const fs::path& p) {
        outputs[role] = {{"path", p.string()}, {"checksum", io::checksum_file(p)}};
    }
    void write(const fs::path& out) const {
        const json j = {{"tool", "tspsens"},
                        {"version", TSPSENS_VERSION},
                        {"command", command},
                        {"config", config},
                        {"inputs", inputs},
                        {"outputs", outputs}};
        fs::path m = out;
        m += ".manifest.json";
        io::write_file(m, j.dump(2) + "\n");
    }
};

std::vector<Instance> load_dataset(const fs::path& p) { return read_instances(p); }

// gen

struct GenArgs {
    std::size_t n = 0;
    std::size_t count = 1;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_gen(const GenArgs& a) {
    std::vector<Instance> ds;
    ds.reserve(a.count);
    for (std::size_t k = 0; k < a.count; ++k) ds.push_back(generate_instance(a.n, a.seed + k));
    const auto out = resolve(a.out);
    write_instances(out, ds);
    Manifest m{"gen"};
    m.config = {{"n", a.n}, {"count", a.count}, {"seed", a.seed}};
    m.output("dataset", out);
    m.write(out);
    spdlog::info("wrote {} instances to {}", ds.size(), out.string());
    return kOk;
}

// label

struct LabelArgs {
    std::string in, out, task = "removal";
    int workers = 1;
    bool resume = true;
    std::size_t chunk = 64;
};

int cmd_label(const LabelArgs& a) {
    const auto in = resolve(a.in);
    const auto out = resolve(a.out);
    const auto ds = load_dataset(in);
    LabelRunOptions opts;
    opts.task = parse_task(a.task);
    opts.workers = a.workers;
    opts.resume = a.resume;
    opts.chunk = a.chunk;
    opts.dataset_checksum = io::checksum_file(in);
    const auto summary = label_dataset(ds, out, opts);
    for (const auto& [id, err] : summary.failures) spdlog::error("instance {}: {}", id, err);
    spdlog::info("labeled {} / skipped {} / failed {} of {}; mean {:.4f}s median {:.4f}s per instance",
                 summary.labeled, summary.skipped, summary.failures.size(), summary.total,
                 summary.mean_seconds_per_instance, summary.median_seconds_per_instance);
    Manifest m{"label"};
    m.config = {{"task", to_string(opts.task)}, {"workers", a.workers}, {"resume", opts.resume}, {"chunk", a.chunk}};
    m.input("dataset", in);
    m.output("labels", out);
    m.write(out);
    return summary.failures.empty() ? kOk : kPartial;
}

// baseline

struct BaselineArgs {
    std::string in, labels, method, out;
    int workers = 1;
};

std::string canonical_method(const std::string& m) {
    if (m == "nn") return method::kNearestNeighbor;
    if (m == "splice") return method::kSplice;
    if (m == "detour") return method::kDetour;
    if (m == "2opt") return method::kTwoOpt;
    return m;
}

int cmd_baseline(const BaselineArgs& a) {
    const auto in = resolve(a.in);
    const auto out = resolve(a.out);
    const auto ds = load_dataset(in);
    const std::string method = canonical_method(a.method);
    if (!is_baseline_method(method)) {
        throw ValidationError("unknown baseline '" + a.method + "' (expected nn|splice|detour|2opt|oracle)");
    }
    const std::string checksum = io::checksum_file(in);
    std::optional<LabelFile> labels;
    Manifest m{"baseline"};
    m.input("dataset", in);
    if (!a.labels.empty()) {
        const auto lp = resolve(a.labels);
        labels = read_labels(lp);
        if (labels->dataset_checksum != checksum) {
            throw AlignmentError("labels " + lp.string() + " were built from a different dataset (checksum " +
                                 labels->dataset_checksum + " vs " + checksum + ")");
        }
        m.input("labels", lp);
    }
    const bool needs_labels = method != method::kNearestNeighbor;
    if (needs_labels && !labels) throw ValidationError("method '" + method + "' needs --labels for the base tour");
    Task task = method == method::kOracle ? labels->task : baseline_task(method);
    if (labels && labels->task != task) {
        throw ValidationError("method '" + method + "' scores the " + std::string(to_string(task)) +
                              " task but the labels are for " + std::string(to_string(labels->task)));
    }
    std::vector<Instance> subset;
    if (labels) {
        std::set<std::string> have;
        for (const auto& r : labels->records) have.insert(r.instance_id);
        for (const auto& inst : ds) {
            if (have.contains(inst.id())) subset.push_back(inst);
        }
    } else {
        subset = ds;
    }
    ScoreFile f;
    f.task = task;
    f.method = method;
    f.dataset_checksum = checksum;
    f.records = run_baseline_parallel(method, subset, labels ? &*labels : nullptr, a.workers);
    write_scores(out, f);
    m.config = {{"method", method}, {"workers", a.workers}};
    m.output("scores", out);
    m.write(out);
    spdlog::info("scored {} instances with {}", f.records.size(), method);
    return kOk;
}

// synth-cache

struct SynthArgs {
    std::string in, out;
    std::size_t dim = 16;
    std::uint64_t seed = 0;
};

int cmd_synth_cache(const SynthArgs& a) {
    const auto in = resolve(a.in);
    const auto out = resolve(a.out);
    const auto ds = load_dataset(in);
    auto cache = synth_random_embeddings(ds, a.dim, a.seed);
    cache.set_dataset_ref(io::checksum_file(in));
    write_activation_cache(cache, out);
    Manifest m{"synth-cache"};
    m.config = {{"dim", a.dim}, {"seed", a.seed}};
    m.input("dataset", in);
    m.output("cache", out);
    m.write(out);
    return kOk;
}

// probe-train

struct ProbeTrainArgs {
    std::string in, labels, cache, out, splits, report;
    std::string family = "linear";
    std::optional<std::string> objective;
    std::optional<std::string> selection;
    std::optional<double> tau, dropout, lr, weight_decay;
    std::optional<std::size_t> width, depth, heads, ff_width, epochs, batch_size;
    std::uint64_t seed = 0;
    std::uint64_t split_seed = 0;
    std::vector<double> ratios{0.8, 0.1, 0.1};
    std::vector<std::uint64_t> seeds;
    int workers = 1;
};

struct LoadedInputs {
    fs::path in;
    std::vector<Instance> ds;
    LabelFile labels;
    std::optional<ActivationCache> cache;
};

LoadedInputs load_inputs(const std::string& in_s, const std::string& labels_s, const std::string& cache_s,
                         Manifest& m) {
    LoadedInputs li;
    li.in = resolve(in_s);
    li.ds = load_dataset(li.in);
    const auto lp = resolve(labels_s);
    li.labels = read_labels(lp);
    const std::string checksum = io::checksum_file(li.in);
    if (li.labels.dataset_checksum != checksum) {
        throw AlignmentError("labels " + lp.string() + " were built from a different dataset");
    }
    m.input("dataset", li.in);
    m.input("labels", lp);
    if (!cache_s.empty()) {
        const auto cp = resolve(cache_s);
        li.cache = read_activation_cache(cp);
        std::vector<Instance> labeled;
        for (const auto& inst : li.ds) {
            if (std::any_of(li.labels.records.begin(), li.labels.records.end(),
                            [&](const SensitivityLabels& l) { return l.instance_id == inst.id(); })) {
                labeled.push_back(inst);
            }
        }
        validate_cache_alignment(*li.cache, labeled);
        m.input("cache", cp);
    }
    return li;
}

json report_json(const EvalReport& r) { return json::parse(format_summary_json(std::span(&r, 1)))[0]; }

int cmd_probe_train(const ProbeTrainArgs& a) {
    Manifest m{"probe-train"};
    auto li = load_inputs(a.in, a.labels, a.cache, m);
    const Task task = li.labels.task;
    ProbeConfig c = ProbeConfig::reference_defaults(parse_family(a.family), task);
    if (a.objective) c.objective = parse_objective(*a.objective);
    if (a.selection) c.selection = parse_selection(*a.selection);
    if (a.tau) c.tau = *a.tau;
    if (a.dropout) c.dropout = *a.dropout;
    if (a.lr) c.lr = *a.lr;
    if (a.weight_decay) c.weight_decay = *a.weight_decay;
    if (a.width) c.width = *a.width;
    if (a.depth) c.depth = *a.depth;
    if (a.heads) c.heads = *a.heads;
    if (a.ff_width) c.ff_width = *a.ff_width;
    if (a.epochs) c.epochs = *a.epochs;
    if (a.batch_size) c.batch_size = *a.batch_size;
    c.seed = a.seed;
    c.validate();

    const auto examples = build_probe_examples(li.ds, li.labels, li.cache ? &*li.cache : nullptr);
    std::vector<std::string> ids;
    for (const auto& ex : examples) ids.push_back(ex.instance_id);

    const auto out = resolve(a.out);
    SplitSpec splits;
    fs::path split_path = a.splits.empty() ? fs::path(out.string() + ".splits.json") : resolve(a.splits);
    if (!a.splits.empty() && fs::exists(split_path)) {
        splits = read_splits(split_path);
        m.input("splits", split_path);
    } else {
        if (a.ratios.size() != 3) throw ValidationError("--ratios needs three values (train val test)");
        splits = make_splits(ids, {a.ratios[0], a.ratios[1], a.ratios[2]}, a.split_seed);
        write_splits(split_path, splits);
    }

    const auto probe = train_probe(c, task, examples, splits);
    save_probe(out, probe);
    const auto val = evaluate_probe(probe, examples, splits.val, "probe");
    const auto test = evaluate_probe(probe, examples, splits.test, "probe");

    json report = {{"task", to_string(task)},
                   {"family", to_string(c.family)},
                   {"objective", to_string(c.objective)},
                   {"parameters", probe.params.count()},
                   {"best_epoch", probe.best_epoch},
                   {"selection", to_string(probe.selection)},
                   {"flagged_features", probe.standardizer.flagged},
                   {"val", report_json(val)},
                   {"test", report_json(test)}};
    json curve = json::array();
    for (const auto& e : probe.curve) {
        curve.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"val_top1", e.val_top1}});
    }
    report["curve"] = curve;

    int code = kOk;
    if (!a.seeds.empty()) {
        const auto ms = train_multiseed(c, task, examples, splits, a.seeds, a.workers);
        json runs = json::array();
        for (const auto& r : ms.runs) {
            runs.push_back({{"seed", r.seed}, {"ok", r.ok}, {"error", r.error}, {"top1", r.top1}, {"top5", r.top5}, {"rho", r.rho}});
        }
        report["multiseed"] = {{"runs", runs},
                               {"mean_top1", ms.mean_top1}, {"std_top1", ms.std_top1},
                               {"mean_top5", ms.mean_top5}, {"std_top5", ms.std_top5},
                               {"mean_rho", ms.mean_rho}, {"std_rho", ms.std_rho},
                               {"failed", ms.failed}};
        if (ms.failed > 0) code = kPartial;
    }
    const auto report_path = a.report.empty() ? fs::path(out.string() + ".report.json") : resolve(a.report);
    io::write_file(report_path, report.dump(2) + "\n");
    const std::vector<EvalReport> both{val, test};
    std::cout << "validation / test\n" << format_table(both, false);

    m.config = {{"family", to_string(c.family)}, {"objective", to_string(c.objective)}, {"tau", c.tau},
                {"width", c.width}, {"depth", c.depth}, {"heads", c.heads}, {"ff_width", c.ff_width},
                {"dropout", c.dropout}, {"lr", c.lr}, {"weight_decay", c.weight_decay}, {"epochs", c.epochs},
                {"batch_size", c.batch_size}, {"seed", c.seed}, {"split_seed", a.split_seed},
                {"ratios", a.ratios}, {"seeds", a.seeds}, {"features", a.cache.empty() ? "geometry" : "cache"}};
    m.output("probe", out);
    m.output("splits", split_path);
    m.output("report", report_path);
    m.write(out);
    return code;
}

// probe-score

struct ProbeScoreArgs {
    std::string in, labels, cache, probe, out, name = "probe";
};

int cmd_probe_score(const ProbeScoreArgs& a) {
    Manifest m{"probe-score"};
    auto li = load_inputs(a.in, a.labels, a.cache, m);
    const auto pp = resolve(a.probe);
    const auto probe = load_probe(pp);
    m.input("probe", pp);
    ScoreFile f;
    f.task = probe.task;
    f.method = "probe." + a.name;
    f.dataset_checksum = io::checksum_file(li.in);
    f.records = score_dataset_with_probe(probe, li.ds, li.labels, li.cache ? &*li.cache : nullptr, f.method);
    const auto out = resolve(a.out);
    write_scores(out, f);
    m.config = {{"name", a.name}};
    m.output("scores", out);
    m.write(out);
    return kOk;
}

// eval

struct EvalArgs {
    std::vector<std::string> scores;
    std::string labels, split, split_name = "test", out, format = "table";
    std::vector<std::string> ensembles;
    std::string ensemble_mode = "zscore";
    std::optional<double> alpha;
    std::vector<double> alpha_grid;
    bool per_instance = false;
};

int cmd_eval(const EvalArgs& a) {
    Manifest m{"eval"};
    const auto lp = resolve(a.labels);
    const auto labels = read_labels(lp);
    m.input("labels", lp);
    std::vector<ScoreFile> files;
    for (const auto& s : a.scores) {
        const auto sp = resolve(s);
        auto f = read_scores(sp);
        if (f.dataset_checksum != labels.dataset_checksum) {
            throw AlignmentError("scores " + sp.string() + " (dataset checksum " + f.dataset_checksum +
                                 ") do not match labels " + lp.string() + " (dataset " + labels.dataset_checksum + ")");
        }
        if (f.task != labels.task) throw AlignmentError("scores " + sp.string() + " are for a different task");
        m.input("scores:" + f.method, sp);
        files.push_back(std::move(f));
    }
    std::set<std::string> ids;
    std::set<std::string> val_ids;
    if (!a.split.empty()) {
        const auto spp = resolve(a.split);
        const auto spec = read_splits(spp);
        const auto& chosen = spec.get(a.split_name);
        ids.insert(chosen.begin(), chosen.end());
        val_ids.insert(spec.val.begin(), spec.val.end());
        m.input("split", spp);
    }

    std::vector<EvalReport> reports;
    for (const auto& f : files) reports.push_back(evaluate_method(f.records, labels, ids));

    auto by_method = [&](const std::string& name) -> const ScoreFile& {
        for (const auto& f : files) {
            if (f.method == name || f.method == canonical_method(name)) return f;
        }
        throw ValidationError("ensemble member '" + name + "' is not among the --scores files");
    };
    for (const auto& e : a.ensembles) {
        const auto plus = e.find('+');
        if (plus == std::string::npos) throw ValidationError("--ensemble expects A+B, got '" + e + "'");
        const auto& fa = by_method(e.substr(0, plus));
        const auto& fb = by_method(e.substr(plus + 1));
        EnsembleSpec spec;
        spec.method_a = fa.method;
        spec.method_b = fb.method;
        if (a.ensemble_mode == "zscore") spec.mode = EnsembleMode::zscore;
        else if (a.ensemble_mode == "raw") spec.mode = EnsembleMode::raw;
        else throw ValidationError("--ensemble-mode must be zscore or raw");
        if (!a.alpha_grid.empty()) spec.grid = a.alpha_grid;

        std::unordered_map<std::string, const CandidateScores*> ma, mb;
        for (const auto& r : fa.records) ma[r.instance_id] = &r;
        for (const auto& r : fb.records) mb[r.instance_id] = &r;
        if (a.alpha) {
            spec.alpha = *a.alpha;
        } else {
            if (val_ids.empty()) throw ValidationError("alpha selection needs --split with a val partition (or pass --alpha)");
            std::vector<EnsembleExample> val;
            for (const auto& id : val_ids) {
                if (!ma.contains(id) || !mb.contains(id)) throw AlignmentError("ensemble members miss val instance '" + id + "'");
                val.push_back({ma[id], mb[id], &labels.find(id)});
            }
            spec.alpha = select_alpha(spec, val);
        }
        std::vector<CandidateScores> mixed;
        for (const auto& r : fa.records) {
            if (!mb.contains(r.instance_id)) continue;
            mixed.push_back(ensemble_scores(spec, r, *mb[r.instance_id]));
        }
        auto rep = evaluate_method(mixed, labels, ids);
        rep.alpha = spec.alpha;
        reports.push_back(std::move(rep));
    }

    std::string text;
    if (a.format == "table") text = format_table(reports, a.per_instance);
    else if (a.format == "records") text = format_records(reports);
    else throw ValidationError("--format must be table or records");

    if (a.out.empty()) {
        std::cout << text;
    } else {
        const auto out = resolve(a.out);
        io::write_file(out, text);
        fs::path summary = out;
        summary += ".summary.json";
        io::write_file(summary, format_summary_json(reports));
        m.config = {{"split_name", a.split_name}, {"format", a.format}, {"ensembles", a.ensembles},
                    {"ensemble_mode", a.ensemble_mode}};
        if (a.alpha) m.config["alpha"] = *a.alpha;
        m.output("report", out);
        m.output("summary", summary);
        m.write(out);
        std::cout << format_table(reports, false);
    }
    return kOk;
}

// render

struct RenderArgs {
    std::string in, id, labels, scores, out;
    bool heuristic = false;
};

int cmd_render(const RenderArgs& a) {
    const auto in = resolve(a.in);
    const auto ds = load_dataset(in);
    const Instance* inst = nullptr;
    for (const auto& i : ds) {
        if (a.id.empty() || i.id() == a.id) {
            inst = &i;
            break;
        }
    }
    if (!inst) throw ValidationError("instance '" + a.id + "' not found in " + in.string());
    Manifest m{"render"};
    m.input("dataset", in);

    RenderOptions opts;
    opts.title = inst->id();
    std::vector<int> tour;
    std::optional<LabelFile> labels;
    if (!a.labels.empty()) {
        const auto lp = resolve(a.labels);
        labels = read_labels(lp);
        m.input("labels", lp);
        const auto& l = labels->find(inst->id());
        tour = l.base_tour;
        opts.task = l.task;
        opts.values = l.deltas_pct;
    }
    if (!a.scores.empty()) {
        const auto sp = resolve(a.scores);
        const auto f = read_scores(sp);
        m.input("scores", sp);
        for (const auto& r : f.records) {
            if (r.instance_id == inst->id()) {
                opts.task = f.task;
                opts.values = r.scores;
            }
        }
        if (opts.values.empty()) throw AlignmentError("scores file has no record for '" + inst->id() + "'");
    }
    if (tour.empty()) {
        if (inst->size() <= kExactMaxNodes) {
            tour = solve_exact(*inst).order;
        } else if (a.heuristic) {
            tour = solve_heuristic(*inst, {}, inst->seed().value_or(0)).order;
        } else {
            throw SizeLimitError("n=" + std::to_string(inst->size()) +
                                 " is too large for an exact tour; supply --labels or pass --heuristic");
        }
    }
    if (opts.task == Task::forbid && !opts.values.empty() && !labels) {
        throw ValidationError("forbid-task scores need --labels so edges follow the labeled base tour");
    }
    const auto out = resolve(a.out);
    io::write_file(out, render_svg(*inst, tour, opts));
    m.config = {{"id", inst->id()}, {"heuristic", a.heuristic}};
    m.output("svg", out);
    m.write(out);
    return kOk;
}

// serve

struct ServeArgs {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::size_t cache_size = 256;
    std::size_t exact_cap = 16;
    std::string journal;
    std::vector<std::string> probes;
};

int cmd_serve(const ServeArgs& a) {
    service::ServiceOptions opts;
    opts.cache_size = a.cache_size;
    opts.exact_cap = a.exact_cap;
    if (!a.journal.empty()) opts.journal_dir = resolve(a.journal);
    service::Service svc(opts);
    for (const auto& spec : a.probes) {
        // name=probe.json[@cache.bin]
        const auto eq = spec.find('=');
        if (eq == std::string::npos) throw ValidationError("--probe expects name=path[@cache], got '" + spec + "'");
        const auto name = spec.substr(0, eq);
        auto rest = spec.substr(eq + 1);
        service::LoadedProbe lp;
        const auto at = rest.find('@');
        if (at != std::string::npos) {
            lp.cache = read_activation_cache(resolve(rest.substr(at + 1)));
            rest = rest.substr(0, at);
        }
        lp.probe = load_probe(resolve(rest));
        svc.add_probe(name, std::move(lp));
        spdlog::info("loaded probe '{}'", name);
    }
    if (const auto n = svc.restore()) spdlog::info("restored {} sessions from journal", n);
    if (!service::serve(svc, a.host, a.port)) {
        spdlog::error("could not bind {}:{}", a.host, a.port);
        return kInternal;
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Exact and learned TSP sensitivity: generate, label, score, probe, evaluate, serve"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off")->capture_default_str();
    app.set_version_flag("--version", TSPSENS_VERSION);

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "Generate uniform random instances");
    g->add_option("--n", gen.n, "Nodes per instance")->required();
    g->add_option("--count", gen.count, "Number of instances")->capture_default_str();
    g->add_option("--seed", gen.seed, "Seed of the first instance; instance k uses seed+k")->capture_default_str();
    g->add_option("--out", gen.out, "Dataset file (JSONL)")->required();

    LabelArgs lab;
    auto* l = app.add_subcommand("label", "Compute exact removal or forbid deltas");
    l->add_option("--in", lab.in, "Dataset file")->required();
    l->add_option("--task", lab.task, "removal|forbid")->capture_default_str();
    l->add_option("--out", lab.out, "Label file (appended to when resuming)")->required();
    l->add_option("--workers", lab.workers, "Parallel workers")->capture_default_str();
    l->add_option("--chunk", lab.chunk, "Instances per write batch")->capture_default_str();
    l->add_flag("--resume,!--no-resume", lab.resume, "Skip ids already in --out (default on)");

    BaselineArgs base;
    auto* b = app.add_subcommand("baseline", "Score candidates with a heuristic baseline");
    b->add_option("--in", base.in, "Dataset file")->required();
    b->add_option("--labels", base.labels, "Label file (base tours; required except for nn)");
    b->add_option("--method", base.method, "nn|splice|detour|2opt|oracle")->required();
    b->add_option("--out", base.out, "Score file")->required();
    b->add_option("--workers", base.workers, "Parallel workers")->capture_default_str();

    SynthArgs syn;
    auto* s = app.add_subcommand("synth-cache", "Write random-embedding activation cache (control features)");
    s->add_option("--in", syn.in, "Dataset file")->required();
    s->add_option("--dim", syn.dim, "Embedding width")->capture_default_str();
    s->add_option("--seed", syn.seed, "Seed")->capture_default_str();
    s->add_option("--out", syn.out, "Cache file")->required();

    ProbeTrainArgs pt;
    auto* p = app.add_subcommand("probe-train", "Train a sensitivity probe");
    p->add_option("--in", pt.in, "Dataset file")->required();
    p->add_option("--labels", pt.labels, "Label file")->required();
    p->add_option("--cache", pt.cache, "Activation cache (geometry features when omitted)");
    p->add_option("--family", pt.family, "linear|deepsets|settransformer")->capture_default_str();
    p->add_option("--objective", pt.objective, "regression|hard_ce|soft_ce");
    p->add_option("--selection", pt.selection, "val_loss|val_top1");
    p->add_option("--tau", pt.tau, "Soft-CE temperature");
    p->add_option("--width", pt.width, "Hidden width");
    p->add_option("--depth", pt.depth, "phi layers (DeepSets) or encoder blocks (transformer)");
    p->add_option("--heads", pt.heads, "Attention heads");
    p->add_option("--ff-width", pt.ff_width, "Transformer feedforward width");
    p->add_option("--dropout", pt.dropout, "Dropout probability");
    p->add_option("--lr", pt.lr, "Learning rate");
    p->add_option("--weight-decay", pt.weight_decay, "Decoupled weight decay");
    p->add_option("--epochs", pt.epochs, "Training epochs");
    p->add_option("--batch-size", pt.batch_size, "Instances per step");
    p->add_option("--seed", pt.seed, "Initialization/shuffle seed")->capture_default_str();
    p->add_option("--splits", pt.splits, "Split file (read if it exists, otherwise written)");
    p->add_option("--split-seed", pt.split_seed, "Seed for a new split")->capture_default_str();
    p->add_option("--ratios", pt.ratios, "Train/val/test ratios")->expected(3)->capture_default_str();
    p->add_option("--seeds", pt.seeds, "Also train one probe per seed and report mean/std");
    p->add_option("--workers", pt.workers, "Parallel workers for --seeds")->capture_default_str();
    p->add_option("--report", pt.report, "Report file (default <out>.report.json)");
    p->add_option("--out", pt.out, "Probe file")->required();

    ProbeScoreArgs ps;
    auto* q = app.add_subcommand("probe-score", "Score labeled instances with a trained probe");
    q->add_option("--in", ps.in, "Dataset file")->required();
    q->add_option("--labels", ps.labels, "Label file (base tours)")->required();
    q->add_option("--cache", ps.cache, "Activation cache the probe was trained on");
    q->add_option("--probe", ps.probe, "Probe file")->required();
    q->add_option("--name", ps.name, "Method name suffix: probe.<name>")->capture_default_str();
    q->add_option("--out", ps.out, "Score file")->required();

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Evaluate score files against exact labels");
    e->add_option("--scores", ev.scores, "Score files")->required();
    e->add_option("--labels", ev.labels, "Label file")->required();
    e->add_option("--split", ev.split, "Split file");
    e->add_option("--split-name", ev.split_name, "train|val|test")->capture_default_str();
    e->add_option("--ensemble", ev.ensembles, "Methods to combine, A+B (repeatable)");
    e->add_option("--ensemble-mode", ev.ensemble_mode, "zscore|raw")->capture_default_str();
    e->add_option("--alpha", ev.alpha, "Fixed ensemble weight (otherwise selected on val)");
    e->add_option("--alpha-grid", ev.alpha_grid, "Candidate weights for selection");
    e->add_option("--format", ev.format, "table|records")->capture_default_str();
    e->add_flag("--per-instance", ev.per_instance, "Include per-instance rows in table output");
    e->add_option("--out", ev.out, "Report file (stdout when omitted)");

    RenderArgs rd;
    auto* r = app.add_subcommand("render", "Draw an instance and tour as SVG, colored by deltas or scores");
    r->add_option("--in", rd.in, "Dataset file")->required();
    r->add_option("--id", rd.id, "Instance id (first instance when omitted)");
    r->add_option("--labels", rd.labels, "Label file; colors by exact deltas");
    r->add_option("--scores", rd.scores, "Score file; colors by scores");
    r->add_flag("--heuristic", rd.heuristic, "Allow a heuristic tour above the exact limit");
    r->add_option("--out", rd.out, "SVG file")->required();

    ServeArgs sv;
    auto* v = app.add_subcommand("serve", "Run the HTTP what-if service");
    v->add_option("--host", sv.host, "Bind address")->capture_default_str();
    v->add_option("--port", sv.port, "Port")->capture_default_str();
    v->add_option("--cache-size", sv.cache_size, "Cached solves per session")->capture_default_str();
    v->add_option("--exact-cap", sv.exact_cap, "Interactive exact cap")->capture_default_str();
    v->add_option("--journal", sv.journal, "Journal directory for session persistence");
    v->add_option("--probe", sv.probes, "name=probe.json[@cache.bin] (repeatable)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& ok) {
        return app.exit(ok);
    } catch (const CLI::ParseError& err) {
        app.exit(err);
        return kValidation;
    }

    spdlog::set_level(spdlog::level::from_str(log_level));
    spdlog::set_pattern("[%l] %v");
    try {
        if (*g) return cmd_gen(gen);
        if (*l) return cmd_label(lab);
        if (*b) return cmd_baseline(base);
        if (*s) return cmd_synth_cache(syn);
        if (*p) return cmd_probe_train(pt);
        if (*q) return cmd_probe_score(ps);
        if (*e) return cmd_eval(ev);
        if (*r) return cmd_render(rd);
        if (*v) return cmd_serve(sv);
    } catch (const ValidationError& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return kValidation;
    } catch (const SizeLimitError& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return kValidation;
    } catch (const InfeasibleError& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return kValidation;
    } catch (const AlignmentError& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return kValidation;
    } catch (const FormatError& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return kValidation;
    } catch (const IoError& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return kValidation;
    } catch (const std::exception& ex) {
        std::cerr << "internal error: " << ex.what() << '\n';
        return kInternal;
    }
    return kInternal;
}
