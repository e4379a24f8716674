#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "tspsens/probes.hpp"
#include "tspsens/rng.hpp"

namespace gradcheck {

struct Fixture {
    tspsens::Matrix features;
    std::vector<double> deltas;
};

/// m candidates with d random features and random non-negative deltas.
inline Fixture make_fixture(std::size_t m, std::size_t d, std::uint64_t seed) {
    tspsens::Rng rng(seed);
    Fixture f{tspsens::Matrix(m, d), std::vector<double>(m)};
    for (double& v : f.features.data) v = rng.normal();
    for (double& v : f.deltas) v = 10.0 * rng.uniform();
    return f;
}

inline tspsens::ProbeConfig small_config(tspsens::ProbeFamily family, tspsens::Objective objective) {
    tspsens::ProbeConfig c;
    c.family = family;
    c.objective = objective;
    c.width = 4;
    c.depth = family == tspsens::ProbeFamily::settransformer ? 1 : 2;
    c.heads = 2;
    c.ff_width = 8;
    c.dropout = 0.0;
    c.tau = 2.0;
    return c;
}

struct Result {
    double worst = 0.0;   // largest |a - n| / max(|a|, |n|) over entries above the floor
    std::size_t params = 0;
    std::size_t failures = 0;
};

/// Central differences with step h against the analytic gradient. An entry
/// passes when |a - n| <= rel * max(|a|, |n|) or both are below `floor`.
inline Result check(const tspsens::ProbeConfig& config, const Fixture& fx, std::uint64_t init_seed,
                    double h = 1e-4, double rel = 1e-3, double floor = 1e-7) {
    using namespace tspsens;
    Parameters params = init_parameters(config, fx.features.cols, init_seed);
    const TargetScale target{3.0, 2.0};
    Parameters grads;
    loss_and_gradients(params, config, fx.features, fx.deltas, &target, &grads);
    Result r;
    r.params = params.count();
    for (std::size_t k = 0; k < params.values.size(); ++k) {
        for (std::size_t i = 0; i < params.values[k].size(); ++i) {
            const double orig = params.values[k].data[i];
            params.values[k].data[i] = orig + h;
            const double up = loss_and_gradients(params, config, fx.features, fx.deltas, &target, nullptr);
            params.values[k].data[i] = orig - h;
            const double down = loss_and_gradients(params, config, fx.features, fx.deltas, &target, nullptr);
            params.values[k].data[i] = orig;
            const double numeric = (up - down) / (2 * h);
            const double analytic = grads.values[k].data[i];
            const double scale = std::max(std::abs(numeric), std::abs(analytic));
            if (scale < floor) continue;
            const double err = std::abs(numeric - analytic) / scale;
            r.worst = std::max(r.worst, err);
            if (err > rel && std::abs(numeric - analytic) > floor) ++r.failures;
        }
    }
    return r;
}

}  // namespace gradcheck
