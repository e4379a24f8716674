#include <doctest.h>

#include <algorithm>

#include "fixtures.hpp"
#include "tspsens/baselines.hpp"
#include "tspsens/error.hpp"
#include "tspsens/labeling.hpp"

using namespace tspsens;

TEST_CASE("nn distance examples") {
    for (double s : score_nn_distance(fixtures::unit_square()).scores) CHECK(s == doctest::Approx(100.0));
    // Node 3 at (1,1): nearest is (0.5,0.5), distance 50*sqrt2.
    const auto inst = make_instance({{0, 0}, {0.1, 0}, {0.5, 0.5}, {1, 1}}, "four");
    const auto s = score_nn_distance(inst).scores;
    CHECK(s[0] == doctest::Approx(10.0));
    CHECK(s[1] == doctest::Approx(10.0));
    CHECK(s[2] == doctest::Approx(64.0312).epsilon(1e-6));
    CHECK(s[3] == doctest::Approx(70.7107).epsilon(1e-6));
    const auto dup = make_instance({{0.2, 0.2}, {0.2, 0.2}, {0.9, 0.1}, {0.5, 0.8}}, "dup");
    CHECK(score_nn_distance(dup).scores[0] == 0.0);
    CHECK(score_nn_distance(dup).scores[1] == 0.0);
}

TEST_CASE("unit square tour-based baselines") {
    const auto sq = fixtures::unit_square();
    const std::vector<int> tour{0, 1, 2, 3};
    for (double s : score_splice(sq, tour).scores) CHECK(s == doctest::Approx(fixtures::kSquareRemovalPct));
    for (double s : score_detour(sq, tour).scores) CHECK(s == doctest::Approx(141.4214).epsilon(1e-6));
    for (double s : score_two_opt_repair(sq, tour).scores) CHECK(s == doctest::Approx(82.8427).epsilon(1e-6));
    CHECK(score_two_opt_repair(sq, tour).method == "baseline.2opt");
}

TEST_CASE("collinear fixtures score zero") {
    const auto line = make_instance({{0.1, 0.1}, {0.5, 0.1}, {0.9, 0.1}, {0.5, 0.9}}, "line");
    const auto tour = solve_exact(line).order;
    const auto splice = score_splice(line, tour).scores;
    CHECK(splice[1] == doctest::Approx(0.0));
    // Edge (0,2) would have midpoint node 1, but 0-2 is not on the tour; use a tour that has it.
    const std::vector<int> t2{0, 2, 3, 1};
    const auto detour = score_detour(line, t2).scores;
    CHECK(detour[0] == doctest::Approx(0.0));
}

TEST_CASE("parallel segments give a cheap 2-opt repair") {
    // Two long parallel sides 0.02 apart: swapping them costs almost nothing.
    const auto inst = make_instance({{0.1, 0.5}, {0.9, 0.5}, {0.9, 0.52}, {0.1, 0.52}, {0.5, 0.95}}, "par");
    const auto tour = solve_exact(inst).order;
    const auto s = score_two_opt_repair(inst, tour).scores;
    CHECK(*std::min_element(s.begin(), s.end()) < 5.0);
}

TEST_CASE("bound sandwich on random instances") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto inst = generate_instance(9, 300 + seed);
        const auto r = label_node_removal(inst);
        const auto f = label_edge_forbid(inst);
        const auto splice = score_splice(inst, r.base_tour).scores;
        const auto repair = score_two_opt_repair(inst, f.base_tour).scores;
        const auto detour = score_detour(inst, f.base_tour).scores;
        for (std::size_t i = 0; i < 9; ++i) {
            CHECK(splice[i] >= -1e-9);
            CHECK(splice[i] <= r.deltas_pct[i] + 1e-9);
            CHECK(detour[i] >= -1e-9);
            const double abs_delta = f.deltas_pct[i] * f.base_length / 100.0;
            CHECK(abs_delta <= repair[i] + 1e-9);
        }
    }
}

TEST_CASE("scorers are permutation covariant") {
    const auto inst = generate_instance(8, 17);
    const std::vector<int> perm{3, 7, 0, 5, 1, 6, 2, 4};  // new index k holds old node perm[k]
    std::vector<Point> pts;
    for (int p : perm) pts.push_back(inst[static_cast<std::size_t>(p)]);
    const auto moved = make_instance(pts, "moved");
    const auto a = score_nn_distance(inst).scores;
    const auto b = score_nn_distance(moved).scores;
    for (std::size_t k = 0; k < 8; ++k) CHECK(b[k] == a[static_cast<std::size_t>(perm[k])]);
}

TEST_CASE("geometry features") {
    const auto sq = fixtures::unit_square();
    const auto node = build_geometry_features(sq, Task::removal);
    CHECK(node.cols == kGeometryNodeDim);
    for (std::size_t i = 0; i < 4; ++i) CHECK(node(i, 2) == doctest::Approx(100.0));
    const auto edge = build_geometry_features(sq, Task::forbid, std::vector<int>{0, 1, 2, 3});
    CHECK(edge.cols == kGeometryEdgeDim);
    const std::vector<double> want{0, 0, 100, 0, 100, 0, 100, 0, 100};
    for (std::size_t c = 0; c < 9; ++c) CHECK(edge(0, c) == doctest::Approx(want[c]));
    CHECK_THROWS_AS(build_geometry_features(sq, Task::forbid), ValidationError);
}

TEST_CASE("baseline dispatch and kernels") {
    CHECK(is_baseline_method("baseline.detour"));
    CHECK_FALSE(is_baseline_method("probe.x"));
    CHECK(baseline_task("baseline.splice") == Task::removal);
    CHECK(baseline_task("baseline.2opt") == Task::forbid);

    std::vector<Instance> ds;
    for (std::uint64_t s = 0; s < 6; ++s) ds.push_back(generate_instance(7, s));
    LabelFile labels;
    labels.task = Task::forbid;
    for (const auto& inst : ds) labels.records.push_back(label_edge_forbid(inst));
    const auto a = run_baseline_serial("baseline.2opt", ds, &labels);
    const auto b = run_baseline_parallel("baseline.2opt", ds, &labels, 3);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].scores == b[i].scores);
    const auto oracle = run_baseline_serial("oracle", ds, &labels);
    CHECK(oracle[0].scores == labels.records[0].deltas_pct);
}

TEST_CASE("score files round-trip and reject non-finite values") {
    const auto dir = fixtures::scratch("baselines");
    ScoreFile f;
    f.task = Task::removal;
    f.method = "baseline.nn";
    f.dataset_checksum = "0011";
    f.records.push_back(score_nn_distance(generate_instance(6, 1)));
    write_scores(dir / "s.jsonl", f);
    const auto back = read_scores(dir / "s.jsonl");
    CHECK(back.method == f.method);
    CHECK(back.dataset_checksum == "0011");
    CHECK(back.records[0].scores == f.records[0].scores);
}
