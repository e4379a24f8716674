// Serial reference kernels against their OpenMP counterparts.
#include <benchmark/benchmark.h>

#include <omp.h>

#include "tspsens/baselines.hpp"
#include "tspsens/labeling.hpp"

using namespace tspsens;

namespace {

std::vector<Instance> make_batch(std::size_t n, std::size_t count) {
    std::vector<Instance> out;
    for (std::size_t k = 0; k < count; ++k) out.push_back(generate_instance(n, 77 + k));
    return out;
}

const std::vector<Instance>& batch12() {
    static const auto b = make_batch(12, 32);
    return b;
}

const LabelFile& labels12() {
    static const LabelFile lf = [] {
        LabelFile f;
        for (auto& o : label_batch_serial(batch12(), Task::forbid)) f.records.push_back(*o.labels);
        f.task = Task::forbid;
        return f;
    }();
    return lf;
}

void BM_LabelSerial(benchmark::State& st) {
    const auto task = st.range(0) == 0 ? Task::removal : Task::forbid;
    for (auto _ : st) benchmark::DoNotOptimize(label_batch_serial(batch12(), task));
    st.SetItemsProcessed(st.iterations() * static_cast<int64_t>(batch12().size()));
}

void BM_LabelParallel(benchmark::State& st) {
    const auto task = st.range(0) == 0 ? Task::removal : Task::forbid;
    const int workers = omp_get_max_threads();
    for (auto _ : st) benchmark::DoNotOptimize(label_batch_parallel(batch12(), task, workers));
    st.SetItemsProcessed(st.iterations() * static_cast<int64_t>(batch12().size()));
    st.counters["workers"] = workers;
}

void BM_TwoOptSerial(benchmark::State& st) {
    const auto& lf = labels12();
    for (auto _ : st) benchmark::DoNotOptimize(run_baseline_serial(method::kTwoOpt, batch12(), &lf));
}

void BM_TwoOptParallel(benchmark::State& st) {
    const int workers = omp_get_max_threads();
    const auto& lf = labels12();
    for (auto _ : st) benchmark::DoNotOptimize(run_baseline_parallel(method::kTwoOpt, batch12(), &lf, workers));
    st.counters["workers"] = workers;
}

}  // namespace

BENCHMARK(BM_LabelSerial)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LabelParallel)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_TwoOptSerial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_TwoOptParallel)->Unit(benchmark::kMicrosecond)->UseRealTime();

BENCHMARK_MAIN();
