#include "tspsens/service.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <list>
#include <regex>

#include <spdlog/spdlog.h>

#include <json.hpp>

#include "tspsens/baselines.hpp"
#include "tspsens/error.hpp"
#include "tspsens/io.hpp"
#include "tspsens/labeling.hpp"
#include "tspsens/solver.hpp"

namespace tspsens::service {

using nlohmann::json;

namespace {

/// Sessions never shrink below a triangle; sensitivity needs a quadrilateral.
constexpr std::size_t kMinActiveAfterRemoval = 3;
constexpr std::size_t kMinActiveForSensitivity = 4;

struct HttpError : Error {
    int status;
    HttpError(int s, const std::string& msg) : Error(msg), status(s) {}
};

Response reply(int status, const json& body) { return {status, body.dump()}; }

Response error_reply(int status, const std::string& message) { return reply(status, json{{"error", message}}); }

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[40];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
    return out;
}

std::string constraint_key(const SolveConstraints& c) {
    std::string k = "r";
    for (int v : c.removed_nodes) k += ":" + std::to_string(v);
    k += "|f";
    for (const auto& e : c.forbidden_edges) k += ":" + std::to_string(e.u) + "-" + std::to_string(e.v);
    return k;
}

json tour_json(const Tour& t) { return {{"order", t.order}, {"length", t.length}, {"exact", t.exact}}; }

json instance_json(const Instance& inst) {
    json coords = json::array();
    for (const auto& p : inst.coords()) coords.push_back({p.x, p.y});
    json j = {{"id", inst.id()}, {"n", inst.size()}, {"coords", coords}};
    if (inst.seed()) j["seed"] = *inst.seed();
    return j;
}

struct Action {
    enum Kind { remove, forbid } kind = remove;
    int node = -1;
    Edge edge;
    std::string applied_at;

    json to_json(bool with_time) const {
        json j = kind == remove ? json{{"action", "remove"}, {"node", node}}
                                : json{{"action", "forbid"}, {"edge", {edge.u, edge.v}}};
        if (with_time) j["applied_at"] = applied_at;
        return j;
    }
};

Action parse_action(const json& j) {
    if (!j.is_object() || !j.contains("action") || !j["action"].is_string()) {
        throw ValidationError("body must be {\"action\":\"remove\",\"node\":k} or {\"action\":\"forbid\",\"edge\":[u,v]}");
    }
    Action a;
    const auto kind = j["action"].get<std::string>();
    if (kind == "remove") {
        if (!j.contains("node") || !j["node"].is_number_integer()) throw ValidationError("remove action needs an integer 'node'");
        a.kind = Action::remove;
        a.node = j["node"].get<int>();
    } else if (kind == "forbid") {
        if (!j.contains("edge") || !j["edge"].is_array() || j["edge"].size() != 2 || !j["edge"][0].is_number_integer() ||
            !j["edge"][1].is_number_integer()) {
            throw ValidationError("forbid action needs 'edge': [u, v]");
        }
        a.kind = Action::forbid;
        a.edge = Edge(j["edge"][0].get<int>(), j["edge"][1].get<int>());
        if (a.edge.u == a.edge.v) throw ValidationError("edge endpoints must differ");
    } else {
        throw ValidationError("unknown action '" + kind + "' (expected remove|forbid)");
    }
    return a;
}

/// Bounded least-recently-used map from constraint key to solved tour.
class TourCache {
public:
    explicit TourCache(std::size_t capacity) : capacity_(capacity) {}

    std::optional<Tour> get(const std::string& key) {
        const auto it = index_.find(key);
        if (it == index_.end()) return std::nullopt;
        order_.splice(order_.begin(), order_, it->second);
        ++hits_;
        return it->second->second;
    }

    void put(const std::string& key, const Tour& tour) {
        if (capacity_ == 0 || index_.contains(key)) return;
        order_.emplace_front(key, tour);
        index_[key] = order_.begin();
        if (order_.size() > capacity_) {
            index_.erase(order_.back().first);
            order_.pop_back();
        }
    }

    std::size_t size() const { return order_.size(); }
    std::size_t hits() const { return hits_; }

private:
    std::size_t capacity_;
    std::list<std::pair<std::string, Tour>> order_;
    std::unordered_map<std::string, std::list<std::pair<std::string, Tour>>::iterator> index_;
    std::size_t hits_ = 0;
};

}  // namespace

struct Session {
    std::string id;
    Instance instance;
    DistanceMatrix dist;
    bool heuristic = false;
    std::uint64_t heuristic_seed = 0;
    std::vector<std::string> warnings;

    /// Guards actions/states. Exclusive for apply/undo, shared for reads.
    mutable std::shared_mutex mu;
    std::vector<Action> actions;
    /// states[k] is the constraint state after k actions, with its tour.
    std::vector<std::pair<SolveConstraints, Tour>> states;

    /// Guards the caches, which readers also fill.
    std::mutex cache_mu;
    TourCache tours;
    std::map<std::string, json> scores;

    std::filesystem::path journal;

    Session(std::string sid, Instance inst, bool heur, std::size_t cache_size)
        : id(std::move(sid)), instance(std::move(inst)), dist(instance), heuristic(heur),
          heuristic_seed(instance.seed().value_or(0)), tours(cache_size) {}

    Tour solve(const SolveConstraints& c) {
        const auto key = constraint_key(c);
        {
            std::lock_guard lk(cache_mu);
            if (auto hit = tours.get(key)) return *hit;
        }
        const std::size_t m = instance.size() - c.removed_nodes.size();
        Tour t;
        if (m <= kExactMaxNodes) {
            t = solve_exact(dist, c);
        } else if (heuristic) {
            t = solve_heuristic(dist, c, heuristic_seed);
        } else {
            throw SizeLimitError(std::to_string(m) + " active nodes exceed the exact limit of " +
                                 std::to_string(kExactMaxNodes) + "; create the session with heuristic=true");
        }
        std::lock_guard lk(cache_mu);
        tours.put(key, t);
        return t;
    }

    void journal_append(const json& j) const {
        if (journal.empty()) return;
        std::ofstream out(journal, std::ios::app | std::ios::binary);
        if (!out) throw IoError("cannot append to journal " + journal.string());
        out << j.dump() << '\n';
    }
};

Service::Service(ServiceOptions options) : options_(std::move(options)) {
    if (!options_.journal_dir.empty()) std::filesystem::create_directories(options_.journal_dir);
}

Service::~Service() = default;

void Service::add_probe(const std::string& name, LoadedProbe probe) { probes_[name] = std::move(probe); }

std::size_t Service::session_count() const {
    std::shared_lock lk(sessions_mu_);
    return sessions_.size();
}

std::shared_ptr<Session> Service::find(const std::string& id) const {
    std::shared_lock lk(sessions_mu_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw HttpError(404, "unknown session '" + id + "'");
    return it->second;
}

std::string Service::next_id() {
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%06llu", static_cast<unsigned long long>(++counter_));
    return buf;
}

namespace {

template <typename F>
Response guarded(F&& f) {
    try {
        return f();
    } catch (const HttpError& e) {
        return error_reply(e.status, e.what());
    } catch (const SizeLimitError& e) {
        return error_reply(413, e.what());
    } catch (const InfeasibleError& e) {
        return error_reply(409, e.what());
    } catch (const AlignmentError& e) {
        return error_reply(409, e.what());
    } catch (const ValidationError& e) {
        return error_reply(422, e.what());
    } catch (const json::exception& e) {
        return error_reply(422, std::string("malformed JSON: ") + e.what());
    } catch (const std::exception& e) {
        spdlog::error("internal error: {}", e.what());
        return error_reply(500, e.what());
    }
}

Instance instance_from_body(const json& j) {
    if (!j.is_object()) throw ValidationError("body must be a JSON object");
    if (j.contains("coords")) {
        std::vector<Point> pts;
        for (const auto& p : j.at("coords")) {
            if (!p.is_array() || p.size() != 2) throw ValidationError("coords must be [[x, y], ...]");
            pts.push_back({p[0].get<double>(), p[1].get<double>()});
        }
        return make_instance(std::move(pts), j.value("id", std::string("custom")));
    }
    if (j.contains("n")) {
        const auto n = j.at("n").get<long long>();
        if (n < 0) throw ValidationError("n must be positive");
        return generate_instance(static_cast<std::size_t>(n), j.value("seed", std::uint64_t{0}));
    }
    throw ValidationError("body needs either 'coords' or 'n' (with optional 'seed')");
}

}  // namespace

Response Service::health() const {
    return reply(200, json{{"status", "ok"}, {"sessions", session_count()}, {"exact_cap", options_.exact_cap}});
}

Response Service::create_instance(const std::string& body) {
    return guarded([&] {
        const json j = json::parse(body);
        Instance inst = instance_from_body(j);
        const bool heur = j.value("heuristic", false);
        const std::size_t n = inst.size();
        std::vector<std::string> warnings;
        if (n > kExactMaxNodes) {
            if (!heur) {
                throw HttpError(413, "n=" + std::to_string(n) + " exceeds the exact limit of " +
                                         std::to_string(kExactMaxNodes) + "; pass heuristic=true for approximate solves");
            }
            warnings.push_back("n=" + std::to_string(n) + " is solved heuristically; lengths are not exact");
        } else if (n > options_.exact_cap) {
            warnings.push_back("n=" + std::to_string(n) + " exceeds the interactive cap of " +
                               std::to_string(options_.exact_cap) + "; exact re-solves may be slow");
        }

        std::string id;
        {
            std::unique_lock lk(sessions_mu_);
            id = next_id();
        }
        auto s = std::make_shared<Session>(id, std::move(inst), heur, options_.cache_size);
        s->warnings = warnings;
        const Tour base = s->solve({});
        s->states.emplace_back(SolveConstraints{}, base);
        if (!options_.journal_dir.empty()) {
            s->journal = options_.journal_dir / (id + ".jsonl");
            s->journal_append({{"type", "create"}, {"instance", instance_json(s->instance)}, {"heuristic", heur}});
        }
        json out = {{"session_id", id},
                    {"instance", instance_json(s->instance)},
                    {"tour", base.order},
                    {"length", base.length},
                    {"exact", base.exact},
                    {"heuristic", heur},
                    {"warnings", warnings}};
        {
            std::unique_lock lk(sessions_mu_);
            sessions_.emplace(id, std::move(s));
        }
        return reply(201, out);
    });
}

namespace {

struct SubInstance {
    std::vector<int> active;
    Instance inst;
    std::vector<int> tour;
};

SubInstance sub_instance(const Session& s, const SolveConstraints& c, const Tour& current) {
    const auto active = active_nodes(s.instance.size(), c);
    std::vector<Point> pts;
    std::vector<int> to_sub(s.instance.size(), -1);
    for (std::size_t k = 0; k < active.size(); ++k) {
        pts.push_back(s.instance[static_cast<std::size_t>(active[k])]);
        to_sub[static_cast<std::size_t>(active[k])] = static_cast<int>(k);
    }
    std::vector<int> tour;
    for (int v : current.order) tour.push_back(to_sub[static_cast<std::size_t>(v)]);
    return {active, Instance(s.instance.id(), std::move(pts), std::nullopt), tour};
}

}  // namespace

Response Service::sensitivity(const std::string& session_id, const std::string& task_name, const std::string& method) {
    return guarded([&] {
        const auto s = find(session_id);
        const Task task = parse_task(task_name);
        SolveConstraints cons;
        Tour current;
        std::size_t version = 0;
        {
            std::shared_lock lk(s->mu);
            cons = s->states.back().first;
            current = s->states.back().second;
            version = s->actions.size();
        }
        const auto active = active_nodes(s->instance.size(), cons);
        if (active.size() < kMinActiveForSensitivity) {
            throw ValidationError("sensitivity needs at least " + std::to_string(kMinActiveForSensitivity) +
                                  " active nodes (have " + std::to_string(active.size()) + ")");
        }
        const auto edges = tour_edges(current.order);

        json out = {{"session_id", session_id},
                    {"task", to_string(task)},
                    {"method", method},
                    {"state_version", version},
                    {"base_length", current.length}};
        if (task == Task::removal) {
            out["candidates"] = active;
        } else {
            json c = json::array();
            for (const auto& e : edges) c.push_back({e.u, e.v});
            out["candidates"] = c;
        }

        if (method == "exact") {
            if (!current.exact) throw SizeLimitError("exact sensitivity needs an exactly solved state");
            std::vector<double> deltas;
            std::vector<double> secs;
            json scores = json::array();
            const std::size_t count = task == Task::removal ? active.size() : edges.size();
            for (std::size_t k = 0; k < count; ++k) {
                SolveConstraints c = cons;
                if (task == Task::removal) {
                    c.removed_nodes.insert(active[k]);
                    std::erase_if(c.forbidden_edges,
                                  [v = active[k]](const Edge& e) { return e.u == v || e.v == v; });
                } else {
                    c.forbidden_edges.insert(edges[k]);
                }
                const auto t0 = std::chrono::steady_clock::now();
                try {
                    const Tour t = s->solve(c);
                    const double d = task == Task::removal ? 100.0 * (current.length - t.length) / current.length
                                                           : 100.0 * (t.length - current.length) / current.length;
                    scores.push_back(d);
                } catch (const InfeasibleError&) {
                    scores.push_back(nullptr);
                }
                secs.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
            }
            out["scores"] = scores;
            out["deltas_pct"] = scores;
            out["solve_seconds"] = secs;
            out["exact"] = true;
        } else {
            const auto sub = sub_instance(*s, cons, current);
            std::vector<double> scores;
            if (method.rfind("probe.", 0) == 0) {
                const auto name = method.substr(6);
                const auto it = probes_.find(name);
                if (it == probes_.end()) throw HttpError(409, "no probe named '" + name + "' is loaded");
                const auto& lp = it->second;
                if (lp.probe.task != task) {
                    throw HttpError(409, "probe '" + name + "' was trained for the " +
                                             std::string(to_string(lp.probe.task)) + " task");
                }
                Matrix features;
                if (lp.cache) {
                    if (!lp.cache->contains(s->instance.id())) {
                        throw HttpError(409, "activation cache for probe '" + name + "' does not cover instance '" +
                                                 s->instance.id() + "'");
                    }
                    const Matrix& full = lp.cache->block(s->instance.id());
                    if (full.rows != s->instance.size()) {
                        throw HttpError(409, "activation cache block for '" + s->instance.id() + "' has the wrong row count");
                    }
                    Matrix h(sub.active.size(), full.cols);
                    for (std::size_t k = 0; k < sub.active.size(); ++k) {
                        const auto src = full.row(static_cast<std::size_t>(sub.active[k]));
                        std::copy(src.begin(), src.end(), h.row(k).begin());
                    }
                    features = build_candidate_features(h, task, sub.tour);
                } else {
                    features = build_geometry_features(sub.inst, task, sub.tour);
                }
                if (features.cols != lp.probe.input_dim) {
                    throw HttpError(409, "probe '" + name + "' expects " + std::to_string(lp.probe.input_dim) +
                                             " features but the available source gives " +
                                             std::to_string(features.cols));
                }
                scores = lp.probe.score(features);
            } else {
                std::string m;
                if (method == "nn") m = method::kNearestNeighbor;
                else if (method == "splice") m = method::kSplice;
                else if (method == "detour") m = method::kDetour;
                else if (method == "2opt") m = method::kTwoOpt;
                else throw ValidationError("unknown method '" + method + "' (expected exact|nn|splice|detour|2opt|probe.<name>)");
                if (baseline_task(m) != task) {
                    throw ValidationError("method '" + method + "' scores the " + std::string(to_string(baseline_task(m))) +
                                          " task");
                }
                if (m == method::kNearestNeighbor) scores = score_nn_distance(sub.inst).scores;
                else if (m == method::kSplice) scores = score_splice(sub.inst, sub.tour).scores;
                else if (m == method::kDetour) scores = score_detour(sub.inst, sub.tour).scores;
                else scores = score_two_opt_repair(sub.inst, sub.tour).scores;
            }
            out["scores"] = scores;
            out["exact"] = false;
        }

        {
            std::lock_guard lk(s->cache_mu);
            json stored = out;
            stored.erase("solve_seconds");
            s->scores[std::to_string(version) + "|" + std::string(to_string(task)) + "|" + method] = stored;
        }
        return reply(200, out);
    });
}

namespace {

void check_action(const Session& s, const SolveConstraints& cons, const Action& a) {
    const auto n = static_cast<int>(s.instance.size());
    if (a.kind == Action::remove) {
        if (a.node < 0 || a.node >= n) {
            throw ValidationError("node " + std::to_string(a.node) + " is outside [0, " + std::to_string(n) + ")");
        }
        if (cons.removed_nodes.contains(a.node)) {
            throw HttpError(409, "node " + std::to_string(a.node) + " is already removed");
        }
        const std::size_t left = s.instance.size() - cons.removed_nodes.size() - 1;
        if (left < kMinActiveAfterRemoval) {
            throw ValidationError("removing node " + std::to_string(a.node) + " would leave " + std::to_string(left) +
                                  " nodes; a tour needs at least " + std::to_string(kMinActiveAfterRemoval));
        }
        for (const auto& e : cons.forbidden_edges) {
            if (e.u == a.node || e.v == a.node) {
                throw HttpError(409, "node " + std::to_string(a.node) + " is an endpoint of forbidden edge (" +
                                         std::to_string(e.u) + "," + std::to_string(e.v) + ")");
            }
        }
    } else {
        if (a.edge.u < 0 || a.edge.v >= n) {
            throw ValidationError("edge (" + std::to_string(a.edge.u) + "," + std::to_string(a.edge.v) +
                                  ") has an endpoint outside [0, " + std::to_string(n) + ")");
        }
        if (cons.removed_nodes.contains(a.edge.u) || cons.removed_nodes.contains(a.edge.v)) {
            throw HttpError(409, "edge (" + std::to_string(a.edge.u) + "," + std::to_string(a.edge.v) +
                                     ") touches a removed node");
        }
        if (cons.forbidden_edges.contains(a.edge)) {
            throw HttpError(409, "edge (" + std::to_string(a.edge.u) + "," + std::to_string(a.edge.v) +
                                     ") is already forbidden");
        }
    }
}

SolveConstraints with_action(SolveConstraints c, const Action& a) {
    if (a.kind == Action::remove) {
        c.removed_nodes.insert(a.node);
    } else {
        c.forbidden_edges.insert(a.edge);
    }
    return c;
}

}  // namespace

Response Service::apply(const std::string& session_id, const std::string& body) {
    return guarded([&] {
        const auto s = find(session_id);
        Action a = parse_action(json::parse(body));
        std::unique_lock lk(s->mu);
        const auto& [cons, prev] = s->states.back();
        check_action(*s, cons, a);
        SolveConstraints next = with_action(cons, a);
        Tour t;
        try {
            t = s->solve(next);
        } catch (const InfeasibleError& e) {
            throw HttpError(409, std::string("action rejected: ") + e.what() +
                                     (next.removed_nodes.size() + 3 == s->instance.size()
                                          ? " (a triangle has exactly one tour, so none of its edges can be forbidden)"
                                          : ""));
        }
        const double prev_len = prev.length;
        const double base_len = s->states.front().second.length;
        a.applied_at = utc_timestamp();
        s->actions.push_back(a);
        s->states.emplace_back(std::move(next), t);
        s->journal_append({{"type", "apply"}, {"action", a.to_json(true)}});

        const json out = {{"session_id", session_id},
                          {"action_index", s->actions.size() - 1},
                          {"action", a.to_json(false)},
                          {"tour", t.order},
                          {"length", t.length},
                          {"exact", t.exact},
                          {"active_nodes", s->instance.size() - s->states.back().first.removed_nodes.size()},
                          {"delta_pct_vs_previous", 100.0 * (t.length - prev_len) / prev_len},
                          {"delta_pct_vs_base", 100.0 * (t.length - base_len) / base_len}};
        return reply(200, out);
    });
}

Response Service::undo(const std::string& session_id) {
    return guarded([&] {
        const auto s = find(session_id);
        std::unique_lock lk(s->mu);
        if (s->actions.empty()) throw HttpError(409, "no action to undo");
        const Action undone = s->actions.back();
        s->actions.pop_back();
        s->states.pop_back();
        s->journal_append({{"type", "undo"}});
        const auto& [cons, t] = s->states.back();
        const json out = {{"session_id", session_id},
                          {"undone", undone.to_json(false)},
                          {"actions", s->actions.size()},
                          {"tour", t.order},
                          {"length", t.length},
                          {"exact", t.exact}};
        return reply(200, out);
    });
}

Response Service::state(const std::string& session_id) {
    return guarded([&] {
        const auto s = find(session_id);
        std::shared_lock lk(s->mu);
        json actions = json::array();
        for (const auto& a : s->actions) actions.push_back(a.to_json(true));
        json history = json::array();
        for (const auto& [c, t] : s->states) history.push_back(tour_json(t));
        const auto& cons = s->states.back().first;
        json forbidden = json::array();
        for (const auto& e : cons.forbidden_edges) forbidden.push_back({e.u, e.v});
        json scores = json::array();
        {
            std::lock_guard clk(s->cache_mu);
            const std::string prefix = std::to_string(s->actions.size()) + "|";
            for (const auto& [k, v] : s->scores) {
                if (k.rfind(prefix, 0) == 0) scores.push_back(v);
            }
        }
        const json out = {{"session_id", s->id},
                          {"instance", instance_json(s->instance)},
                          {"heuristic", s->heuristic},
                          {"warnings", s->warnings},
                          {"actions", actions},
                          {"constraints", {{"removed_nodes", cons.removed_nodes}, {"forbidden_edges", forbidden}}},
                          {"base", tour_json(s->states.front().second)},
                          {"current", tour_json(s->states.back().second)},
                          {"history", history},
                          {"scores", scores}};
        return reply(200, out);
    });
}

Response Service::handle(const std::string& method, const std::string& path,
                         const std::multimap<std::string, std::string>& query, const std::string& body) {
    static const std::regex session_re(R"(^/api/sessions/([A-Za-z0-9_-]+)(/.*)?$)");
    auto param = [&](const std::string& key, const std::string& fallback) {
        const auto it = query.find(key);
        return it == query.end() ? fallback : it->second;
    };
    if (path == "/api/health" && method == "GET") return health();
    if (path == "/api/instances" && method == "POST") return create_instance(body);
    std::smatch m;
    if (std::regex_match(path, m, session_re)) {
        const std::string id = m[1];
        const std::string rest = m[2];
        if (rest == "/sensitivity" && method == "GET") {
            return sensitivity(id, param("task", "removal"), param("method", "exact"));
        }
        if (rest == "/apply" && method == "POST") return apply(id, body);
        if (rest == "/actions/last" && method == "DELETE") return undo(id);
        if ((rest == "/state" || rest.empty()) && method == "GET") return state(id);
    }
    return error_reply(404, "no route for " + method + " " + path);
}

std::size_t Service::restore() {
    if (options_.journal_dir.empty() || !std::filesystem::exists(options_.journal_dir)) return 0;
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(options_.journal_dir)) {
        if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::size_t restored = 0;
    for (const auto& f : files) {
        const std::string id = f.stem().string();
        try {
            const auto lines = io::read_lines(f);
            if (lines.empty()) continue;
            const json head = json::parse(lines.front());
            if (head.at("type") != "create") throw FormatError("journal does not start with a create record");
            auto s = std::make_shared<Session>(id, instance_from_json_line(head.at("instance").dump()),
                                               head.value("heuristic", false), options_.cache_size);
            s->states.emplace_back(SolveConstraints{}, s->solve({}));
            for (std::size_t k = 1; k < lines.size(); ++k) {
                const json r = json::parse(lines[k]);
                if (r.at("type") == "apply") {
                    Action a = parse_action(r.at("action"));
                    a.applied_at = r.at("action").value("applied_at", "");
                    SolveConstraints next = with_action(s->states.back().first, a);
                    const Tour t = s->solve(next);
                    s->actions.push_back(a);
                    s->states.emplace_back(std::move(next), t);
                } else if (r.at("type") == "undo" && !s->actions.empty()) {
                    s->actions.pop_back();
                    s->states.pop_back();
                }
            }
            s->journal = f;
            std::unique_lock lk(sessions_mu_);
            sessions_[id] = s;
            if (id.size() > 1 && id[0] == 's') {
                counter_ = std::max<std::uint64_t>(counter_, std::strtoull(id.c_str() + 1, nullptr, 10));
            }
            ++restored;
        } catch (const std::exception& e) {
            spdlog::warn("skipping journal {}: {}", f.string(), e.what());
        }
    }
    return restored;
}

}  // namespace tspsens::service
