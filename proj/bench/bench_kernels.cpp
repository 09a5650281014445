// Serial reference vs OpenMP dispatch for the mask kernels and a full search.

#include "ovce/kernels.hpp"
#include "ovce/search.hpp"
#include "ovce/synth.hpp"

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

namespace {

std::vector<ovce::Word> random_words(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<ovce::Word> v(n);
    for (auto& w : v) w = rng();
    return v;
}

void BM_CountAnd_Serial(benchmark::State& st) {
    const auto a = random_words(static_cast<std::size_t>(st.range(0)), 1), b = random_words(a.size(), 2);
    for (auto _ : st) benchmark::DoNotOptimize(ovce::kernels::serial::count_and(a, b));
    st.SetBytesProcessed(st.iterations() * st.range(0) * 16);
}

void BM_CountAnd_Parallel(benchmark::State& st) {
    const auto a = random_words(static_cast<std::size_t>(st.range(0)), 1), b = random_words(a.size(), 2);
    for (auto _ : st) benchmark::DoNotOptimize(ovce::kernels::count_and(a, b));
    st.SetBytesProcessed(st.iterations() * st.range(0) * 16);
}

void BM_CountCombined_Serial(benchmark::State& st) {
    const auto n = static_cast<std::size_t>(st.range(0));
    const auto a = random_words(n, 1), b = random_words(n, 2), c = random_words(n, 3);
    for (auto _ : st)
        benchmark::DoNotOptimize(ovce::kernels::serial::count_combined(ovce::kernels::Combine::Or, a, b, c));
    st.SetBytesProcessed(st.iterations() * st.range(0) * 24);
}

void BM_CountCombined_Parallel(benchmark::State& st) {
    const auto n = static_cast<std::size_t>(st.range(0));
    const auto a = random_words(n, 1), b = random_words(n, 2), c = random_words(n, 3);
    for (auto _ : st) benchmark::DoNotOptimize(ovce::kernels::count_combined(ovce::kernels::Combine::Or, a, b, c));
    st.SetBytesProcessed(st.iterations() * st.range(0) * 24);
}

void BM_PerSampleCountAnd_Serial(benchmark::State& st) {
    const std::size_t stride = 64, samples = static_cast<std::size_t>(st.range(0));
    const auto a = random_words(stride * samples, 1), b = random_words(stride * samples, 2);
    std::vector<std::uint32_t> out(samples);
    for (auto _ : st) {
        ovce::kernels::serial::per_sample_count_and(a, b, stride, out);
        benchmark::ClobberMemory();
    }
}

void BM_PerSampleCountAnd_Parallel(benchmark::State& st) {
    const std::size_t stride = 64, samples = static_cast<std::size_t>(st.range(0));
    const auto a = random_words(stride * samples, 1), b = random_words(stride * samples, 2);
    std::vector<std::uint32_t> out(samples);
    for (auto _ : st) {
        ovce::kernels::per_sample_count_and(a, b, stride, out);
        benchmark::ClobberMemory();
    }
}

ovce::SynthWorld bench_world() {
    ovce::SynthSpec spec;
    spec.seed = 7;
    spec.samples = 200;
    spec.width = spec.height = 64;
    spec.subsets = {{"objects", 0, 12, {}, {}}, {"parts", 1, 12, {}, {}}};
    spec.planted = "((objects_0 AND parts_1) OR objects_2)";
    return ovce::generate(spec);
}

void search_bench(benchmark::State& st, bool heuristic) {
    static const ovce::SynthWorld w = bench_world();
    static const auto acts = ovce::binarize_neuron(w.activations, 0, 64, 64, {});
    const ovce::SearchProblem p{&w.archive, &acts.binarized.back(), {}};
    for (auto _ : st) {
        auto r = heuristic ? ovce::beam_search(p, {}) : ovce::naive_beam_search(p, {});
        benchmark::DoNotOptimize(r);
    }
}

void BM_BeamSearch_Heuristic(benchmark::State& st) { search_bench(st, true); }
void BM_BeamSearch_Naive(benchmark::State& st) { search_bench(st, false); }

} // namespace

BENCHMARK(BM_CountAnd_Serial)->Arg(1 << 12)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_CountAnd_Parallel)->Arg(1 << 12)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_CountCombined_Serial)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_CountCombined_Parallel)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_PerSampleCountAnd_Serial)->Arg(1 << 10)->Arg(1 << 14);
BENCHMARK(BM_PerSampleCountAnd_Parallel)->Arg(1 << 10)->Arg(1 << 14);
BENCHMARK(BM_BeamSearch_Heuristic)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BeamSearch_Naive)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
