#include <doctest.h>

#include "fixtures.hpp"
#include "tspsens/error.hpp"
#include "tspsens/io.hpp"
#include "tspsens/labeling.hpp"

using namespace tspsens;

TEST_CASE("unit square labels") {
    const auto sq = fixtures::unit_square();
    const auto r = label_node_removal(sq);
    CHECK(r.base_length == doctest::Approx(400.0));
    REQUIRE(r.deltas_pct.size() == 4);
    for (double d : r.deltas_pct) CHECK(d == doctest::Approx(14.6447).epsilon(1e-5));
    CHECK(r.solve_seconds.size() == 5);
    CHECK(r.total_seconds() >= 0.0);

    const auto f = label_edge_forbid(sq);
    REQUIRE(f.deltas_pct.size() == 4);
    for (double d : f.deltas_pct) CHECK(d == doctest::Approx(fixtures::kSquareForbidPct).epsilon(1e-9));
    CHECK(f.base_tour == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("collinear interior node has zero removal delta") {
    // Node 1 sits on the straight segment between tour neighbours 0 and 2.
    const auto inst = make_instance({{0.1, 0.1}, {0.5, 0.1}, {0.9, 0.1}, {0.5, 0.9}}, "line");
    const auto r = label_node_removal(inst);
    CHECK(r.deltas_pct[1] == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("labels are non-negative and deterministic") {
    for (std::uint64_t s = 0; s < 8; ++s) {
        const auto inst = generate_instance(9, s);
        const auto r = label_node_removal(inst);
        const auto f = label_edge_forbid(inst);
        for (double d : r.deltas_pct) CHECK(d >= -1e-9);
        for (double d : f.deltas_pct) CHECK(d >= -1e-9);
        CHECK(label_node_removal(inst).deltas_pct == r.deltas_pct);
    }
}

TEST_CASE("forbid then un-forbid recovers the base length") {
    const auto inst = generate_instance(10, 3);
    const DistanceMatrix d(inst);
    const Tour base = solve_exact(d);
    SolveConstraints c;
    c.forbidden_edges.insert(Edge(base.order[0], base.order[1]));
    CHECK(solve_exact(d, c).length > base.length - 1e-9);
    c.forbidden_edges.clear();
    CHECK(solve_exact(d, c).length == base.length);
}

TEST_CASE("Big-M forbid deltas equal structural exclusion") {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto inst = generate_instance(4 + s % 6, 50 + s);
        const DistanceMatrix d(inst);
        const auto f = label_edge_forbid(inst);
        const auto edges = tour_edges(f.base_tour);
        for (std::size_t t = 0; t < edges.size(); ++t) {
            SolveConstraints c;
            c.forbidden_edges.insert(edges[t]);
            const double structural = solve_brute_force(d, c, ForbidMode::structural).length;
            const double pct = 100.0 * (structural - f.base_length) / f.base_length;
            CHECK(std::abs(pct - f.deltas_pct[t]) <= 1e-9);
        }
    }
}

TEST_CASE("size caps") {
    CHECK_THROWS_AS(label_node_removal(generate_instance(19, 0)), SizeLimitError);
    CHECK_THROWS_AS(label_edge_forbid(generate_instance(19, 0)), SizeLimitError);
}

TEST_CASE("serial and parallel kernels agree") {
    std::vector<Instance> batch;
    for (std::uint64_t s = 0; s < 12; ++s) batch.push_back(generate_instance(8, s));
    batch.push_back(generate_instance(19, 99));  // fails the cap
    const auto a = label_batch_serial(batch, Task::forbid);
    const auto b = label_batch_parallel(batch, Task::forbid, 4);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].instance_id == b[i].instance_id);
        CHECK(a[i].labels.has_value() == b[i].labels.has_value());
        if (a[i].labels) {
            CHECK(a[i].labels->deltas_pct == b[i].labels->deltas_pct);
            CHECK(a[i].labels->base_tour == b[i].labels->base_tour);
        }
    }
    CHECK_FALSE(a.back().labels.has_value());
    CHECK(a.back().error.find("n=19") != std::string::npos);
}

TEST_CASE("label_dataset preserves order, resumes and reports failures") {
    const auto dir = fixtures::scratch("labeling");
    std::vector<Instance> ds{generate_instance(6, 1), generate_instance(7, 2), generate_instance(6, 3)};
    LabelRunOptions opts;
    opts.task = Task::removal;
    opts.workers = 2;
    opts.chunk = 2;
    opts.dataset_checksum = "abc";
    const auto s1 = label_dataset(ds, dir / "l.jsonl", opts);
    CHECK(s1.labeled == 3);
    CHECK(s1.failures.empty());
    const auto file = read_labels(dir / "l.jsonl");
    REQUIRE(file.records.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(file.records[i].instance_id == ds[i].id());
    CHECK(file.dataset_checksum == "abc");
    CHECK(file.task == Task::removal);

    const auto before = io::read_file(dir / "l.jsonl");
    const auto s2 = label_dataset(ds, dir / "l.jsonl", opts);
    CHECK(s2.labeled == 0);
    CHECK(s2.skipped == 3);
    CHECK(io::read_file(dir / "l.jsonl") == before);

    opts.task = Task::forbid;
    CHECK_THROWS_AS(label_dataset(ds, dir / "l.jsonl", opts), AlignmentError);

    opts.task = Task::removal;
    ds.push_back(generate_instance(20, 4));
    const auto s3 = label_dataset(ds, dir / "l.jsonl", opts);
    CHECK(s3.failures.size() == 1);
    CHECK(s3.failures[0].first == "n20-s4");
}

TEST_CASE("label records round-trip") {
    const auto l = label_edge_forbid(generate_instance(7, 8));
    const auto back = labels_from_json_line(labels_to_json_line(l));
    CHECK(back.instance_id == l.instance_id);
    CHECK(back.task == l.task);
    CHECK(back.deltas_pct == l.deltas_pct);
    CHECK(back.base_tour == l.base_tour);
    CHECK(back.base_length == l.base_length);
    LabelFile f;
    f.records.push_back(l);
    CHECK_THROWS_AS(f.find("nope"), AlignmentError);
}
