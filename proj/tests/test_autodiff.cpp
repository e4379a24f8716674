#include <doctest.h>

#include <cmath>
#include <functional>

#include "tspsens/autodiff.hpp"
#include "tspsens/rng.hpp"

using namespace tspsens;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
    Matrix m(r, c);
    for (double& v : m.data) v = rng.normal();
    return m;
}

// Builds sum(w .* f(inputs)) on a fresh tape so the output is scalar.
using Builder = std::function<ad::Var(ad::Tape&, std::vector<ad::Var>&)>;

double run(const std::vector<Matrix>& inputs, const Matrix& weights, const Builder& build,
           std::vector<Matrix>* grads) {
    ad::Tape t;
    std::vector<ad::Var> vars;
    for (const auto& m : inputs) vars.push_back(t.leaf(m));
    const ad::Var out = build(t, vars);
    const Matrix& v = t.value(out);
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += weights.data[i] * v.data[i];
    if (grads) {
        t.backward(out, weights);
        grads->clear();
        for (auto var : vars) grads->push_back(t.grad(var));
    }
    return s;
}

void check_op(std::vector<Matrix> inputs, std::size_t out_r, std::size_t out_c, const Builder& build) {
    Rng rng(99);
    const Matrix w = random_matrix(out_r, out_c, rng);
    std::vector<Matrix> g;
    run(inputs, w, build, &g);
    const double h = 1e-5;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            const double orig = inputs[k].data[i];
            inputs[k].data[i] = orig + h;
            const double up = run(inputs, w, build, nullptr);
            inputs[k].data[i] = orig - h;
            const double down = run(inputs, w, build, nullptr);
            inputs[k].data[i] = orig;
            const double num = (up - down) / (2 * h);
            CHECK(g[k].data[i] == doctest::Approx(num).epsilon(1e-5).scale(1.0));
        }
    }
}

}  // namespace

TEST_CASE("elementary ops match finite differences") {
    Rng rng(1);
    const auto a = random_matrix(3, 4, rng);
    const auto b = random_matrix(4, 2, rng);
    const auto c = random_matrix(3, 4, rng);
    const auto bias = random_matrix(1, 4, rng);
    const auto gamma = random_matrix(1, 4, rng);

    SUBCASE("matmul") { check_op({a, b}, 3, 2, [](auto& t, auto& v) { return t.matmul(v[0], v[1]); }); }
    SUBCASE("matmul_bt") { check_op({a, c}, 3, 3, [](auto& t, auto& v) { return t.matmul_bt(v[0], v[1]); }); }
    SUBCASE("add and bias") {
        check_op({a, c, bias}, 3, 4, [](auto& t, auto& v) { return t.add_bias(t.add(v[0], v[1]), v[2]); });
    }
    SUBCASE("scale and relu") {
        check_op({a}, 3, 4, [](auto& t, auto& v) { return t.relu(t.scale(v[0], 1.7)); });
    }
    SUBCASE("layer norm") {
        check_op({a, gamma, bias}, 3, 4, [](auto& t, auto& v) { return t.layer_norm(v[0], v[1], v[2]); });
    }
    SUBCASE("mean and broadcast") {
        check_op({a}, 3, 4, [](auto& t, auto& v) { return t.broadcast_rows(t.mean_rows(v[0]), 3); });
    }
    SUBCASE("concat and slice") {
        check_op({a, c}, 3, 5, [](auto& t, auto& v) {
            const ad::Var parts[] = {v[0], v[1]};
            return t.slice_cols(t.concat_cols(parts), 2, 5);
        });
    }
    SUBCASE("softmax") { check_op({a}, 3, 4, [](auto& t, auto& v) { return t.softmax_rows(v[0]); }); }
}

TEST_CASE("softmax rows sum to one and layer norm centers rows") {
    Rng rng(2);
    ad::Tape t;
    const auto x = t.leaf(random_matrix(4, 6, rng));
    const auto& s = t.value(t.softmax_rows(x));
    for (std::size_t r = 0; r < 4; ++r) {
        double sum = 0;
        for (std::size_t c = 0; c < 6; ++c) sum += s(r, c);
        CHECK(sum == doctest::Approx(1.0));
    }
    const auto g = t.leaf(Matrix(1, 6, 1.0));
    const auto b = t.leaf(Matrix(1, 6, 0.0));
    const auto& n = t.value(t.layer_norm(x, g, b));
    for (std::size_t r = 0; r < 4; ++r) {
        double sum = 0;
        for (std::size_t c = 0; c < 6; ++c) sum += n(r, c);
        CHECK(sum == doctest::Approx(0.0).scale(1.0));
    }
}

TEST_CASE("dropout keeps expectation and is seeded") {
    ad::Tape t1, t2;
    Rng r1(5), r2(5);
    const auto x1 = t1.leaf(Matrix(100, 100, 1.0));
    const auto x2 = t2.leaf(Matrix(100, 100, 1.0));
    const auto& d1 = t1.value(t1.dropout(x1, 0.25, r1));
    const auto& d2 = t2.value(t2.dropout(x2, 0.25, r2));
    CHECK(d1 == d2);
    double mean = 0;
    for (double v : d1.data) mean += v;
    CHECK(mean / 10000.0 == doctest::Approx(1.0).epsilon(0.05));
}
