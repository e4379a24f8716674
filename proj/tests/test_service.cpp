#include <doctest.h>

#include <httplib.h>
#include <json.hpp>

#include <future>
#include <thread>

#include "fixtures.hpp"
#include "tspsens/baselines.hpp"
#include "tspsens/probes.hpp"
#include "tspsens/service.hpp"
#include "tspsens/solver.hpp"

using namespace tspsens;
using namespace tspsens::service;
using json = nlohmann::json;

namespace {

const std::string kSquareBody = R"({"id":"square","coords":[[0,0],[1,0],[1,1],[0,1]]})";

std::string create(Service& svc, const std::string& body = kSquareBody) {
    const auto r = svc.create_instance(body);
    REQUIRE(r.status == 201);
    return json::parse(r.body).at("session_id");
}

json body_of(const Response& r) { return json::parse(r.body); }

}  // namespace

TEST_CASE("unit square session") {
    Service svc;
    const auto created = svc.create_instance(kSquareBody);
    CHECK(created.status == 201);
    const auto c = body_of(created);
    CHECK(c["length"].get<double>() == doctest::Approx(400.0));
    CHECK(c["tour"] == json({0, 1, 2, 3}));
    CHECK(c["exact"] == true);
    const std::string id = c["session_id"];

    const auto rem = body_of(svc.sensitivity(id, "removal", "exact"));
    REQUIRE(rem["scores"].size() == 4);
    for (const auto& v : rem["scores"]) CHECK(v.get<double>() == doctest::Approx(fixtures::kSquareRemovalPct).epsilon(1e-6));

    const auto fb = body_of(svc.sensitivity(id, "forbid", "exact"));
    for (const auto& v : fb["scores"]) CHECK(v.get<double>() == doctest::Approx(fixtures::kSquareForbidPct).epsilon(1e-6));

    const auto det = body_of(svc.sensitivity(id, "forbid", "detour"));
    for (const auto& v : det["scores"]) CHECK(v.get<double>() == doctest::Approx(100 * fixtures::kSqrt2).epsilon(1e-6));
    const auto two = body_of(svc.sensitivity(id, "forbid", "2opt"));
    for (const auto& v : two["scores"]) CHECK(v.get<double>() == doctest::Approx(200 * fixtures::kSqrt2 - 200).epsilon(1e-6));
    CHECK(svc.sensitivity(id, "forbid", "nn").status == 422);
    CHECK(svc.sensitivity(id, "removal", "bogus").status == 422);
    CHECK(svc.sensitivity(id, "sideways", "exact").status == 422);

    const auto ap = svc.apply(id, R"({"action":"remove","node":0})");
    REQUIRE(ap.status == 200);
    const auto a = body_of(ap);
    CHECK(a["length"].get<double>() == doctest::Approx(200 + 100 * fixtures::kSqrt2));
    CHECK(a["delta_pct_vs_base"].get<double>() == doctest::Approx(-fixtures::kSquareRemovalPct));
    CHECK(a["active_nodes"] == 3);
    CHECK(a["tour"] == json({1, 2, 3}));

    // A triangle has one tour, so any forbid is infeasible.
    const auto tri = svc.apply(id, R"({"action":"forbid","edge":[1,2]})");
    CHECK(tri.status == 409);
    CHECK(body_of(tri)["error"].get<std::string>().find("triangle") != std::string::npos);
    CHECK(svc.apply(id, R"({"action":"remove","node":1})").status == 422);
    CHECK(svc.apply(id, R"({"action":"remove","node":0})").status == 409);
    CHECK(svc.sensitivity(id, "removal", "exact").status == 422);

    const auto un = svc.undo(id);
    CHECK(un.status == 200);
    CHECK(body_of(un)["length"].get<double>() == doctest::Approx(400.0));
    CHECK(svc.undo(id).status == 409);
}

TEST_CASE("apply, undo, apply is byte identical") {
    Service svc;
    const auto id = create(svc, R"({"n":10,"seed":4})");
    const auto first = svc.apply(id, R"({"action":"forbid","edge":[0,1]})");
    REQUIRE(first.status == 200);
    const auto s1 = svc.state(id).body;
    REQUIRE(svc.undo(id).status == 200);
    const auto again = svc.apply(id, R"({"action":"forbid","edge":[1,0]})");
    CHECK(again.body == first.body);
    CHECK(svc.apply(id, R"({"action":"forbid","edge":[0,1]})").status == 409);
    CHECK(svc.apply(id, R"({"action":"forbid","edge":[0,0]})").status == 422);
    CHECK(svc.apply(id, R"({"action":"remove","node":99})").status == 422);
    CHECK(svc.apply(id, R"({"action":"remove","node":1})").status == 409);
    CHECK(svc.apply(id, "not json").status == 422);
    (void)s1;
}

TEST_CASE("every returned length is the exact optimum for its constraints") {
    Service svc;
    const auto inst = generate_instance(9, 21);
    const auto id = create(svc, R"({"n":9,"seed":21})");
    const auto a1 = body_of(svc.apply(id, R"({"action":"remove","node":4})"));
    const auto a2 = body_of(svc.apply(id, R"({"action":"forbid","edge":[0,2]})"));
    SolveConstraints c;
    c.removed_nodes.insert(4);
    CHECK(a1["length"].get<double>() == doctest::Approx(solve_brute_force(inst, c).length).epsilon(1e-9));
    c.forbidden_edges.insert(Edge(0, 2));
    CHECK(a2["length"].get<double>() == doctest::Approx(solve_brute_force(inst, c).length).epsilon(1e-9));

    // Exact sensitivity in the current state matches independent re-solves.
    const auto sens = body_of(svc.sensitivity(id, "removal", "exact"));
    const double cur = a2["length"];
    const auto cands = sens["candidates"].get<std::vector<int>>();
    CHECK(cands.size() == 8);
    for (std::size_t k = 0; k < cands.size(); ++k) {
        SolveConstraints d = c;
        d.removed_nodes.insert(cands[k]);
        // Deleting an endpoint of the forbidden edge deletes the edge too.
        if (cands[k] == 0 || cands[k] == 2) d.forbidden_edges.clear();
        const double ref = 100 * (cur - solve_brute_force(inst, d).length) / cur;
        CHECK(sens["scores"][k].get<double>() == doctest::Approx(ref).epsilon(1e-9));
    }
}

TEST_CASE("state is stable and reports cached scores") {
    Service svc;
    const auto id = create(svc);
    const auto s0 = svc.state(id).body;
    CHECK(svc.state(id).body == s0);
    svc.sensitivity(id, "removal", "nn");
    const auto st = body_of(svc.state(id));
    CHECK(st["scores"].size() == 1);
    CHECK(st["current"]["length"].get<double>() == doctest::Approx(400.0));
    svc.apply(id, R"({"action":"remove","node":2})");
    const auto st2 = body_of(svc.state(id));
    CHECK(st2["scores"].empty());
    CHECK(st2["actions"][0].contains("applied_at"));
    CHECK(st2["constraints"]["removed_nodes"] == json({2}));
}

TEST_CASE("size limits, unknown sessions and probes") {
    Service svc;
    const auto big = svc.create_instance(R"({"n":30,"seed":1})");
    CHECK(big.status == 413);
    const auto heur = svc.create_instance(R"({"n":30,"seed":1,"heuristic":true})");
    CHECK(heur.status == 201);
    CHECK(body_of(heur)["exact"] == false);
    CHECK(!body_of(heur)["warnings"].empty());
    const auto hid = body_of(heur)["session_id"].get<std::string>();
    CHECK(svc.sensitivity(hid, "removal", "exact").status == 413);
    CHECK(svc.sensitivity(hid, "removal", "splice").status == 200);

    const auto warn = svc.create_instance(R"({"n":17,"seed":1})");
    CHECK(warn.status == 201);
    CHECK(body_of(warn)["warnings"].size() == 1);
    CHECK(svc.create_instance(R"({"n":2})").status == 422);
    CHECK(svc.create_instance(R"({"x":1})").status == 422);

    CHECK(svc.state("s999999").status == 404);
    CHECK(svc.apply("nope", R"({"action":"remove","node":0})").status == 404);
    const auto id = create(svc);
    CHECK(svc.sensitivity(id, "removal", "probe.x").status == 409);
}

TEST_CASE("a loaded geometry probe scores the active sub-instance") {
    Service svc;
    TrainedProbe p;
    p.config.family = ProbeFamily::linear;
    p.task = Task::removal;
    p.input_dim = kGeometryNodeDim;
    p.params = init_parameters(p.config, kGeometryNodeDim, 1);
    p.standardizer.mean.assign(kGeometryNodeDim, 0.0);
    p.standardizer.std.assign(kGeometryNodeDim, 1.0);
    p.standardizer.target = TargetScale{};
    svc.add_probe("geo", {p, std::nullopt});
    const auto id = create(svc, R"({"n":8,"seed":2})");
    svc.apply(id, R"({"action":"remove","node":3})");
    const auto r = svc.sensitivity(id, "removal", "probe.geo");
    REQUIRE(r.status == 200);
    CHECK(body_of(r)["scores"].size() == 7);
    CHECK(svc.sensitivity(id, "forbid", "probe.geo").status == 409);
}

TEST_CASE("sessions are isolated") {
    Service svc;
    const auto a = create(svc);
    const auto b = create(svc);
    CHECK(a != b);
    svc.apply(a, R"({"action":"remove","node":1})");
    CHECK(body_of(svc.state(b))["actions"].empty());
    CHECK(svc.session_count() == 2);

    // Concurrent sessions do not interfere.
    std::vector<std::future<double>> fs;
    for (int t = 0; t < 4; ++t) {
        fs.push_back(std::async(std::launch::async, [&svc, t] {
            const auto id = create(svc, R"({"n":9,"seed":)" + std::to_string(t) + "}");
            svc.apply(id, R"({"action":"remove","node":0})");
            return body_of(svc.state(id))["current"]["length"].get<double>();
        }));
    }
    for (int t = 0; t < 4; ++t) {
        SolveConstraints c;
        c.removed_nodes.insert(0);
        CHECK(fs[static_cast<std::size_t>(t)].get() ==
              doctest::Approx(solve_exact(generate_instance(9, static_cast<std::uint64_t>(t)), c).length));
    }
}

TEST_CASE("journals restore sessions") {
    const auto dir = fixtures::scratch("journal");
    std::string id, before;
    {
        Service svc({16, 8, dir});
        id = create(svc, R"({"n":8,"seed":3})");
        svc.apply(id, R"({"action":"remove","node":2})");
        svc.apply(id, R"({"action":"forbid","edge":[0,1]})");
        svc.undo(id);
        svc.apply(id, R"({"action":"remove","node":5})");
        before = svc.state(id).body;
    }
    Service fresh({16, 8, dir});
    CHECK(fresh.restore() == 1);
    CHECK(fresh.state(id).body == before);
    const auto next = create(fresh);
    CHECK(next != id);
}

TEST_CASE("routing") {
    Service svc;
    CHECK(svc.handle("GET", "/api/health", {}, "").status == 200);
    const auto c = svc.handle("POST", "/api/instances", {}, kSquareBody);
    CHECK(c.status == 201);
    const std::string id = body_of(c)["session_id"];
    const std::multimap<std::string, std::string> q{{"task", "forbid"}, {"method", "detour"}};
    CHECK(svc.handle("GET", "/api/sessions/" + id + "/sensitivity", q, "").status == 200);
    CHECK(svc.handle("POST", "/api/sessions/" + id + "/apply", {}, R"({"action":"remove","node":3})").status == 200);
    CHECK(svc.handle("DELETE", "/api/sessions/" + id + "/actions/last", {}, "").status == 200);
    CHECK(svc.handle("GET", "/api/sessions/" + id + "/state", {}, "").status == 200);
    CHECK(svc.handle("GET", "/api/nowhere", {}, "").status == 404);
}

TEST_CASE("serves over a real socket") {
    Service svc;
    std::promise<std::pair<int, std::function<void()>>> ready;
    auto fut = ready.get_future();
    std::thread th([&] {
        serve(svc, "127.0.0.1", 0, [&](int port, std::function<void()> stop) { ready.set_value({port, stop}); });
    });
    auto [port, stop] = fut.get();
    httplib::Client cli("127.0.0.1", port);
    const auto h = cli.Get("/api/health");
    REQUIRE(h);
    CHECK(h->status == 200);
    const auto c = cli.Post("/api/instances", kSquareBody, "application/json");
    REQUIRE(c);
    CHECK(c->status == 201);
    const std::string id = json::parse(c->body)["session_id"];
    const auto s = cli.Get("/api/sessions/" + id + "/sensitivity?task=removal&method=exact");
    REQUIRE(s);
    CHECK(json::parse(s->body)["scores"][0].get<double>() == doctest::Approx(fixtures::kSquareRemovalPct));
    const auto d = cli.Delete("/api/sessions/" + id + "/actions/last");
    REQUIRE(d);
    CHECK(d->status == 409);
    stop();
    th.join();
}
