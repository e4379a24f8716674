// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <future>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <thread>

#include "gradcheck.hpp"
#include "tspsens/baselines.hpp"
#include "tspsens/evaluation.hpp"
#include "tspsens/instance.hpp"
#include "tspsens/io.hpp"
#include "tspsens/labeling.hpp"
#include "tspsens/pipeline.hpp"
#include "tspsens/probes.hpp"
#include "tspsens/representations.hpp"
#include "tspsens/service.hpp"
#include "tspsens/solver.hpp"

#include <spdlog/spdlog.h>

using namespace tspsens;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

bool close_rel(double a, double b, double rel) { return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)}); }

std::vector<Instance> dataset(std::size_t n, std::size_t count, std::uint64_t seed0) {
    std::vector<Instance> out;
    for (std::size_t k = 0; k < count; ++k) out.push_back(generate_instance(n, seed0 + k));
    return out;
}

std::vector<SensitivityLabels> label_all(std::span<const Instance> ds, Task task) {
    std::vector<SensitivityLabels> out;
    for (auto& o : label_batch_parallel(ds, task, 8)) {
        if (!o.labels) throw std::runtime_error("labeling " + o.instance_id + " failed: " + o.error);
        out.push_back(std::move(*o.labels));
    }
    return out;
}

Outcome solver_equivalence() {
    const auto t0 = Clock::now();
    std::size_t checked = 0, bad = 0;
    for (std::size_t n = 6; n <= 9; ++n) {
        for (std::uint64_t s = 0; s < 200; ++s) {
            const auto inst = generate_instance(n, 1000 * n + s);
            const DistanceMatrix d(inst);
            if (!close_rel(solve_exact(d).length, solve_brute_force(d).length, 1e-9)) ++bad;
            ++checked;
        }
    }
    const double secs = since(t0);
    return {bad == 0 && secs < 120, fmt("%zu instances, %zu mismatches, %.2fs", checked, bad, secs)};
}

struct N12 {
    std::vector<Instance> ds = dataset(12, 100, 50000);
    std::vector<SensitivityLabels> removal = label_all(ds, Task::removal);
    std::vector<SensitivityLabels> forbid = label_all(ds, Task::forbid);
};

Outcome label_invariants(const N12& data) {
    double worst = 0;
    for (const auto* set : {&data.removal, &data.forbid}) {
        for (const auto& l : *set) {
            for (double d : l.deltas_pct) worst = std::min(worst, d);
        }
    }
    // Big-M deltas against structural exclusion on small instances.
    std::size_t compared = 0, bad = 0;
    for (std::size_t n = 5; n <= 9; ++n) {
        for (std::uint64_t s = 0; s < 20; ++s) {
            const auto inst = generate_instance(n, 7000 + 100 * n + s);
            const auto l = label_edge_forbid(inst);
            const DistanceMatrix dist(inst);
            const auto edges = tour_edges(l.base_tour);
            for (std::size_t t = 0; t < edges.size(); ++t) {
                SolveConstraints c;
                c.forbidden_edges.insert(edges[t]);
                const double len = solve_brute_force(dist, c, ForbidMode::structural).length;
                const double ref = 100.0 * (len - l.base_length) / l.base_length;
                if (std::abs(ref - l.deltas_pct[t]) > 1e-9) ++bad;
                ++compared;
            }
        }
    }
    return {worst >= -1e-9 && bad == 0,
            fmt("min delta %.3g over 100 n=12 instances; %zu/%zu Big-M vs structural mismatches", worst, bad, compared)};
}

Outcome bound_sandwich(const N12& data) {
    std::size_t splice_bad = 0, twoopt_bad = 0, detour_bad = 0;
    for (std::size_t k = 0; k < data.ds.size(); ++k) {
        const auto& inst = data.ds[k];
        const auto& r = data.removal[k];
        const auto splice = score_splice(inst, r.base_tour).scores;
        for (std::size_t i = 0; i < splice.size(); ++i) {
            if (splice[i] > r.deltas_pct[i] + 1e-9) ++splice_bad;
        }
        const auto& f = data.forbid[k];
        const auto two = score_two_opt_repair(inst, f.base_tour).scores;
        const auto det = score_detour(inst, f.base_tour).scores;
        for (std::size_t t = 0; t < two.size(); ++t) {
            // The repaired tour is feasible, so in percent of L* it bounds the forbid delta.
            if (f.deltas_pct[t] > 100.0 * two[t] / f.base_length + 1e-9) ++twoopt_bad;
            if (det[t] < -1e-9) ++detour_bad;
        }
    }
    return {splice_bad + twoopt_bad + detour_bad == 0,
            fmt("violations: splice %zu, 2-opt %zu, detour %zu", splice_bad, twoopt_bad, detour_bad)};
}

const double kSqrt2 = std::sqrt(2.0);
const double kRem = 100.0 * (200.0 - 100.0 * kSqrt2) / 400.0;
const double kForb = 100.0 * (200.0 * kSqrt2 - 200.0) / 400.0;
const double kDetour = 100.0 * kSqrt2;
const double kTwoOpt = 200.0 * kSqrt2 - 200.0;

bool all_near(const std::vector<double>& v, double target, double tol = 1e-3) {
    if (v.empty()) return false;
    for (double x : v) {
        if (std::abs(x - target) > tol) return false;
    }
    return true;
}

Outcome fixture_exactness() {
    const auto sq = make_instance({{0, 0}, {1, 0}, {1, 1}, {0, 1}}, "square");
    const auto r = label_node_removal(sq);
    const auto f = label_edge_forbid(sq);
    const bool ok = all_near(r.deltas_pct, kRem) && all_near(f.deltas_pct, kForb) &&
                    all_near(score_splice(sq, r.base_tour).scores, kRem) &&
                    all_near(score_detour(sq, f.base_tour).scores, kDetour) &&
                    all_near(score_two_opt_repair(sq, f.base_tour).scores, kTwoOpt);
    return {ok, fmt("removal %.4f forbid %.4f splice %.4f detour %.4f 2-opt %.4f", r.deltas_pct[0], f.deltas_pct[0],
                    score_splice(sq, r.base_tour).scores[0], score_detour(sq, f.base_tour).scores[0],
                    score_two_opt_repair(sq, f.base_tour).scores[0])};
}

Outcome gradient_checks() {
    std::size_t passed = 0;
    double worst = 0;
    std::string failed;
    for (auto fam : {ProbeFamily::linear, ProbeFamily::deepsets, ProbeFamily::settransformer}) {
        for (auto obj : {Objective::regression, Objective::hard_ce, Objective::soft_ce}) {
            const auto fx = gradcheck::make_fixture(5, 3, 11);
            const auto res = gradcheck::check(gradcheck::small_config(fam, obj), fx, 7);
            worst = std::max(worst, res.worst);
            if (res.failures == 0) {
                ++passed;
            } else {
                failed += " " + std::string(to_string(fam)) + "/" + std::string(to_string(obj));
            }
        }
    }
    return {passed == 9, fmt("%zu/9 combinations, worst relative error %.2e%s", passed, worst, failed.c_str())};
}

Outcome planted_signal() {
    const auto t0 = Clock::now();
    Rng rng(99);
    const std::size_t d = 6, m = 12, count = 300;
    std::vector<double> w(d);
    for (auto& v : w) v = rng.normal();
    std::vector<ProbeExample> ex;
    std::vector<std::string> ids;
    for (std::size_t k = 0; k < count; ++k) {
        ProbeExample e{"p" + std::to_string(k), Matrix(m, d), std::vector<double>(m)};
        for (std::size_t i = 0; i < m; ++i) {
            double y = 2.5;
            for (std::size_t j = 0; j < d; ++j) {
                e.features(i, j) = rng.normal();
                y += w[j] * e.features(i, j);
            }
            e.deltas[i] = y;
        }
        ids.push_back(e.instance_id);
        ex.push_back(std::move(e));
    }
    const auto splits = make_splits(ids, {0.8, 0.1, 0.1}, 1);
    auto cfg = ProbeConfig::reference_defaults(ProbeFamily::linear, Task::removal);
    cfg.epochs = 40;
    const auto probe = train_probe(cfg, Task::removal, ex, splits);
    const auto rep = evaluate_probe(probe, ex, splits.test, "probe.planted");
    const double secs = since(t0);
    return {rep.mean_top1 >= 0.95 && secs < 60, fmt("test top-1 %.3f in %.2fs", rep.mean_top1, secs)};
}

Outcome desk_scale() {
    const auto t0 = Clock::now();
    const auto ds = dataset(12, 1000, 900000);
    LabelFile lf;
    lf.task = Task::removal;
    lf.records = label_all(ds, Task::removal);
    const double label_secs = since(t0);

    std::vector<std::string> ids;
    for (const auto& i : ds) ids.push_back(i.id());
    const auto splits = make_splits(ids, {0.8, 0.1, 0.1}, 0);
    const auto examples = build_probe_examples(ds, lf, nullptr);

    auto cfg = ProbeConfig::reference_defaults(ProbeFamily::settransformer, Task::removal);
    cfg.width = 32;
    cfg.heads = 4;
    cfg.ff_width = 64;
    cfg.depth = 2;
    cfg.epochs = 30;
    cfg.lr = 1e-3;
    const auto probe = train_probe(cfg, Task::removal, examples, splits);
    const auto probe_scores = score_dataset_with_probe(probe, ds, lf, nullptr, "probe.geometry");
    const auto nn = run_baseline_parallel(method::kNearestNeighbor, ds, nullptr, 8);

    std::map<std::string, std::size_t> at;
    for (std::size_t k = 0; k < ds.size(); ++k) at[ds[k].id()] = k;
    auto collect = [&](const std::vector<std::string>& which) {
        std::vector<EnsembleExample> out;
        for (const auto& id : which) {
            const auto k = at.at(id);
            out.push_back({&probe_scores[k], &nn[k], &lf.records[k]});
        }
        return out;
    };
    EnsembleSpec spec{"probe.geometry", method::kNearestNeighbor};
    spec.alpha = select_alpha(spec, collect(splits.val));
    std::vector<CandidateScores> ens;
    for (std::size_t k = 0; k < ds.size(); ++k) ens.push_back(ensemble_scores(spec, probe_scores[k], nn[k]));

    const std::set<std::string> test(splits.test.begin(), splits.test.end());
    const auto rp = evaluate_method(probe_scores, lf, test);
    const auto rn = evaluate_method(nn, lf, test);
    const auto re = evaluate_method(ens, lf, test);
    const double chance = 1.0 / 12.0;
    const bool probe_ok = rp.mean_top1 >= 3 * chance;
    const bool ens_ok = re.mean_top1 >= std::max(rp.mean_top1, rn.mean_top1) - 0.02;
    return {probe_ok && ens_ok,
            fmt("labels %.1fs; test top-1 probe %.3f (need >= %.3f), nn %.3f, ensemble %.3f at alpha %.1f; total %.1fs",
                label_secs, rp.mean_top1, 3 * chance, rn.mean_top1, re.mean_top1, spec.alpha, since(t0))};
}

Outcome metric_properties() {
    Rng rng(5);
    bool ok = true;
    std::vector<double> d(12);
    for (auto& v : d) v = rng.uniform();
    const auto oracle = evaluate_instance({"x", Task::removal, "oracle", d}, {"x", Task::removal, 0, {}, d, {}});
    ok &= oracle.top1 == 1 && oracle.top5 == 1 && std::abs(oracle.rho - 1.0) < 1e-12;
    std::vector<double> rev;
    for (double v : d) rev.push_back(-v);
    const double rho_rev = spearman_rho(rev, d).rho;
    ok &= std::abs(rho_rev + 1.0) < 1e-12;
    const double rho_hand = spearman_rho(std::vector<double>{1, 2, 3}, std::vector<double>{2, 1, 3}).rho;
    ok &= std::abs(rho_hand - 0.5) < 1e-12;

    const std::size_t m = 20, trials = 20000;
    std::vector<double> s(m), dd(m);
    int h1 = 0, h5 = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        for (auto& v : s) v = rng.uniform();
        for (auto& v : dd) v = rng.uniform();
        h1 += topk_hit(s, dd, 1);
        h5 += topk_hit(s, dd, 5);
    }
    const double p1 = 1.0 / m, p5 = 5.0 / m;
    const double r1 = h1 / double(trials), r5 = h5 / double(trials);
    ok &= std::abs(r1 - p1) <= 3 * std::sqrt(p1 * (1 - p1) / trials);
    ok &= std::abs(r5 - p5) <= 3 * std::sqrt(p5 * (1 - p5) / trials);
    return {ok, fmt("oracle %d/%d/%.3f, reversed rho %.3f, hand rho %.3f, random top-1 %.4f (k/n %.4f), top-5 %.4f (%.4f)",
                    oracle.top1, oracle.top5, oracle.rho, rho_rev, rho_hand, r1, p1, r5, p5)};
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(TSPSENS_CLI) + " --log-level off " + args + " > /dev/null 2>&1";
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

Outcome round_trips() {
    const auto dir = fs::temp_directory_path() / "tspsens_acceptance_io";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto ds = dataset(10, 20, 300);
    write_instances(dir / "ds.jsonl", ds);

    auto cache = synth_random_embeddings(ds, 16, 4);
    cache.set_dataset_ref(io::checksum_file(dir / "ds.jsonl"));
    write_activation_cache(cache, dir / "cache.bin");
    const auto back = read_activation_cache(dir / "cache.bin");
    bool cache_ok = back.ids() == cache.ids() && back.dim() == cache.dim() && back.layer_name() == cache.layer_name() &&
                    back.dataset_ref() == cache.dataset_ref();
    for (const auto& id : cache.ids()) cache_ok &= back.block(id).data == cache.block(id).data;
    cache_ok &= encode_activation_cache(back) == encode_activation_cache(cache);

    LabelFile lf;
    lf.task = Task::removal;
    lf.dataset_checksum = cache.dataset_ref();
    lf.records = label_all(ds, Task::removal);
    write_labels(dir / "lab.jsonl", lf);
    std::vector<std::string> ids;
    for (const auto& i : ds) ids.push_back(i.id());
    auto cfg = ProbeConfig::reference_defaults(ProbeFamily::deepsets, Task::removal);
    cfg.width = 8;
    cfg.epochs = 2;
    const auto probe = train_probe(cfg, Task::removal, build_probe_examples(ds, lf, &cache), make_splits(ids, {0.6, 0.2, 0.2}, 3));
    save_probe(dir / "probe.json", probe);
    const auto loaded = load_probe(dir / "probe.json");
    bool probe_ok = probe_to_json(loaded) == probe_to_json(probe) && loaded.params == probe.params;
    const auto x = candidate_features(ds[0], lf.records[0], &cache);
    probe_ok &= loaded.score(x) == probe.score(x);

    // Scores built on one dataset must not be evaluated against labels of another.
    const auto other = dataset(10, 20, 301);
    write_instances(dir / "other.jsonl", other);
    bool refused = run_cli("baseline --in " + (dir / "ds.jsonl").string() + " --method nn --out " +
                           (dir / "nn.jsonl").string()) == 0 &&
                   run_cli("label --in " + (dir / "other.jsonl").string() + " --out " + (dir / "lab2.jsonl").string()) == 0;
    const int same = run_cli("eval --scores " + (dir / "nn.jsonl").string() + " --labels " + (dir / "lab.jsonl").string());
    const int mismatch = run_cli("eval --scores " + (dir / "nn.jsonl").string() + " --labels " + (dir / "lab2.jsonl").string());
    refused &= same == 0 && mismatch == 1;
    return {cache_ok && probe_ok && refused,
            fmt("cache %s, probe %s, eval exit %d on matching inputs and %d on mismatched checksums", cache_ok ? "ok" : "differs",
                probe_ok ? "ok" : "differs", same, mismatch)};
}

Outcome service_coherence() {
    service::Service svc;
    std::promise<std::pair<int, std::function<void()>>> ready;
    auto fut = ready.get_future();
    std::thread th([&] {
        service::serve(svc, "127.0.0.1", 0, [&](int port, std::function<void()> stop) { ready.set_value({port, stop}); });
    });
    auto [port, stop] = fut.get();
    httplib::Client cli("127.0.0.1", port);
    bool ok = true;
    std::string detail;
    auto get_scores = [&](const std::string& id, const char* task, const char* method) {
        const auto r = cli.Get("/api/sessions/" + id + "/sensitivity?task=" + task + "&method=" + method);
        std::vector<double> out;
        if (r && r->status == 200) {
            const auto body = json::parse(r->body);
            for (const auto& v : body["scores"]) out.push_back(v.get<double>());
        } else {
            std::printf("  sensitivity %s/%s: %s\n", task, method, r ? r->body.c_str() : httplib::to_string(r.error()).c_str());
        }
        return out;
    };
    const auto c = cli.Post("/api/instances", R"({"id":"square","coords":[[0,0],[1,0],[1,1],[0,1]]})", "application/json");
    if (!c || c->status != 201) {
        ok = false;
        detail = "create failed";
    } else {
        const std::string id = json::parse(c->body)["session_id"];
        const auto rem = get_scores(id, "removal", "exact");
        const auto forb = get_scores(id, "forbid", "exact");
        const auto spl = get_scores(id, "removal", "splice");
        const auto det = get_scores(id, "forbid", "detour");
        const auto two = get_scores(id, "forbid", "2opt");
        ok &= all_near(rem, kRem) && all_near(forb, kForb) && all_near(spl, kRem) && all_near(det, kDetour) &&
              all_near(two, kTwoOpt);
        const std::string body = R"({"action":"remove","node":0})";
        const auto a1 = cli.Post("/api/sessions/" + id + "/apply", body, "application/json");
        const auto u = cli.Delete("/api/sessions/" + id + "/actions/last");
        const auto a2 = cli.Post("/api/sessions/" + id + "/apply", body, "application/json");
        const bool identical = a1 && u && a2 && a1->status == 200 && u->status == 200 && a1->body == a2->body;
        ok &= identical;
        double len = 0;
        if (a1 && a1->status == 200) len = json::parse(a1->body)["length"];
        ok &= std::abs(len - (200 + 100 * kSqrt2)) < 1e-3;
        detail = fmt("exact removal %.4f forbid %.4f, splice %.4f detour %.4f 2-opt %.4f; apply-undo-apply %s",
                     rem.empty() ? NAN : rem[0], forb.empty() ? NAN : forb[0], spl.empty() ? NAN : spl[0],
                     det.empty() ? NAN : det[0], two.empty() ? NAN : two[0], identical ? "identical" : "differs");
    }
    stop();
    th.join();
    return {ok, detail};
}

}  // namespace

int main() {
    spdlog::set_level(spdlog::level::warn);
    int failures = 0;
    auto report = [&](int k, const char* name, const std::function<Outcome()>& f) {
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = f();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        std::printf("criterion %2d %-22s %s  %s [%.1fs]\n", k, name, o.pass ? "PASS" : "FAIL", o.detail.c_str(), since(t0));
        std::fflush(stdout);
        if (!o.pass) ++failures;
    };
    report(1, "solver-equivalence", solver_equivalence);
    std::optional<N12> n12;
    try {
        n12.emplace();
    } catch (const std::exception& e) {
        std::printf("labeling the n=12 set failed: %s\n", e.what());
    }
    report(2, "label-invariants", [&] { return n12 ? label_invariants(*n12) : Outcome{false, "no labels"}; });
    report(3, "bound-sandwich", [&] { return n12 ? bound_sandwich(*n12) : Outcome{false, "no labels"}; });
    report(4, "fixture-exactness", fixture_exactness);
    report(5, "gradient-check", gradient_checks);
    report(6, "planted-signal", planted_signal);
    report(7, "desk-scale", desk_scale);
    report(8, "metric-properties", metric_properties);
    report(9, "format-round-trips", round_trips);
    report(10, "service-coherence", service_coherence);
    std::printf("%d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
