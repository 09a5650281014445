#include "ovce/kernels.hpp"

#include <algorithm>
#include <bit>
#include <cassert>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ovce::kernels {

namespace serial {

std::uint64_t popcount(std::span<const Word> a) {
    std::uint64_t n = 0;
    for (Word w : a) n += std::popcount(w);
    return n;
}

std::uint64_t count_and(std::span<const Word> a, std::span<const Word> b) {
    assert(a.size() == b.size());
    std::uint64_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i) n += std::popcount(a[i] & b[i]);
    return n;
}

std::uint64_t count_or(std::span<const Word> a, std::span<const Word> b) {
    assert(a.size() == b.size());
    std::uint64_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i) n += std::popcount(a[i] | b[i]);
    return n;
}

std::uint64_t count_andnot(std::span<const Word> a, std::span<const Word> b) {
    assert(a.size() == b.size());
    std::uint64_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i) n += std::popcount(a[i] & ~b[i]);
    return n;
}

void and_into(std::span<Word> dst, std::span<const Word> src) {
    assert(dst.size() == src.size());
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] &= src[i];
}

void or_into(std::span<Word> dst, std::span<const Word> src) {
    assert(dst.size() == src.size());
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] |= src[i];
}

void andnot_into(std::span<Word> dst, std::span<const Word> src) {
    assert(dst.size() == src.size());
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] &= ~src[i];
}

void per_sample_popcount(std::span<const Word> a, std::size_t stride,
                         std::span<std::uint32_t> out) {
    assert(a.size() == stride * out.size());
    for (std::size_t s = 0; s < out.size(); ++s)
        out[s] = static_cast<std::uint32_t>(popcount(a.subspan(s * stride, stride)));
}

void per_sample_count_and(std::span<const Word> a, std::span<const Word> b,
                          std::size_t stride, std::span<std::uint32_t> out) {
    assert(a.size() == stride * out.size() && b.size() == a.size());
    for (std::size_t s = 0; s < out.size(); ++s)
        out[s] = static_cast<std::uint32_t>(
            count_and(a.subspan(s * stride, stride), b.subspan(s * stride, stride)));
}

namespace {
template <class F>
CombinedCounts combined_loop(std::span<const Word> a, std::span<const Word> b, std::span<const Word> c, F f) {
    CombinedCounts r;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Word m = f(a[i], b[i]);
        r.mask += std::popcount(m);
        r.inter += std::popcount(m & c[i]);
    }
    return r;
}
} // namespace

CombinedCounts count_combined(Combine op, std::span<const Word> a, std::span<const Word> b,
                              std::span<const Word> c) {
    assert(a.size() == b.size() && a.size() == c.size());
    switch (op) {
    case Combine::And: return combined_loop(a, b, c, [](Word x, Word y) { return x & y; });
    case Combine::Or: return combined_loop(a, b, c, [](Word x, Word y) { return x | y; });
    case Combine::AndNot: return combined_loop(a, b, c, [](Word x, Word y) { return x & ~y; });
    }
    return {};
}

} // namespace serial

namespace {

int g_workers = 0;

bool go_parallel(std::size_t words) {
#ifdef _OPENMP
    return words >= kParallelThreshold && !omp_in_parallel() && worker_count() > 1;
#else
    (void)words;
    return false;
#endif
}

} // namespace

int worker_count() {
    if (g_workers > 0) return g_workers;
    if (const char* env = std::getenv("OVCE_WORKERS")) {
        int n = std::atoi(env);
        if (n > 0) return n;
    }
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void set_worker_count(int n) { g_workers = n; }

std::uint64_t popcount(std::span<const Word> a) {
    if (!go_parallel(a.size())) return serial::popcount(a);
    std::uint64_t n = 0;
    const auto len = static_cast<std::ptrdiff_t>(a.size());
#pragma omp parallel for reduction(+ : n) num_threads(worker_count()) schedule(static)
    for (std::ptrdiff_t i = 0; i < len; ++i) n += std::popcount(a[i]);
    return n;
}

std::uint64_t count_and(std::span<const Word> a, std::span<const Word> b) {
    if (!go_parallel(a.size())) return serial::count_and(a, b);
    std::uint64_t n = 0;
    const auto len = static_cast<std::ptrdiff_t>(a.size());
#pragma omp parallel for reduction(+ : n) num_threads(worker_count()) schedule(static)
    for (std::ptrdiff_t i = 0; i < len; ++i) n += std::popcount(a[i] & b[i]);
    return n;
}

std::uint64_t count_or(std::span<const Word> a, std::span<const Word> b) {
    if (!go_parallel(a.size())) return serial::count_or(a, b);
    std::uint64_t n = 0;
    const auto len = static_cast<std::ptrdiff_t>(a.size());
#pragma omp parallel for reduction(+ : n) num_threads(worker_count()) schedule(static)
    for (std::ptrdiff_t i = 0; i < len; ++i) n += std::popcount(a[i] | b[i]);
    return n;
}

std::uint64_t count_andnot(std::span<const Word> a, std::span<const Word> b) {
    if (!go_parallel(a.size())) return serial::count_andnot(a, b);
    std::uint64_t n = 0;
    const auto len = static_cast<std::ptrdiff_t>(a.size());
#pragma omp parallel for reduction(+ : n) num_threads(worker_count()) schedule(static)
    for (std::ptrdiff_t i = 0; i < len; ++i) n += std::popcount(a[i] & ~b[i]);
    return n;
}

void and_into(std::span<Word> dst, std::span<const Word> src) {
    if (!go_parallel(dst.size())) return serial::and_into(dst, src);
    const auto len = static_cast<std::ptrdiff_t>(dst.size());
#pragma omp parallel for num_threads(worker_count()) schedule(static)
    for (std::ptrdiff_t i = 0; i < len; ++i) dst[i] &= src[i];
}

void or_into(std::span<Word> dst, std::span<const Word> src) {
    if (!go_parallel(dst.size())) return serial::or_into(dst, src);
    const auto len = static_cast<std::ptrdiff_t>(dst.size());
#pragma omp parallel for num_threads(worker_count()) schedule(static)
    for (std::ptrdiff_t i = 0; i < len; ++i) dst[i] |= src[i];
}

void andnot_into(std::span<Word> dst, std::span<const Word> src) {
    if (!go_parallel(dst.size())) return serial::andnot_into(dst, src);
    const auto len = static_cast<std::ptrdiff_t>(dst.size());
#pragma omp parallel for num_threads(worker_count()) schedule(static)
    for (std::ptrdiff_t i = 0; i < len; ++i) dst[i] &= ~src[i];
}

void per_sample_popcount(std::span<const Word> a, std::size_t stride,
                         std::span<std::uint32_t> out) {
    if (!go_parallel(a.size())) return serial::per_sample_popcount(a, stride, out);
    const auto samples = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for num_threads(worker_count()) schedule(static)
    for (std::ptrdiff_t s = 0; s < samples; ++s)
        out[s] = static_cast<std::uint32_t>(
            serial::popcount(a.subspan(static_cast<std::size_t>(s) * stride, stride)));
}

void per_sample_count_and(std::span<const Word> a, std::span<const Word> b,
                          std::size_t stride, std::span<std::uint32_t> out) {
    if (!go_parallel(a.size())) return serial::per_sample_count_and(a, b, stride, out);
    const auto samples = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for num_threads(worker_count()) schedule(static)
    for (std::ptrdiff_t s = 0; s < samples; ++s) {
        const auto off = static_cast<std::size_t>(s) * stride;
        out[s] = static_cast<std::uint32_t>(
            serial::count_and(a.subspan(off, stride), b.subspan(off, stride)));
    }
}

CombinedCounts count_combined(Combine op, std::span<const Word> a, std::span<const Word> b,
                              std::span<const Word> c) {
    if (!go_parallel(a.size())) return serial::count_combined(op, a, b, c);
    const int workers = worker_count();
    const std::size_t chunk = (a.size() + workers - 1) / workers;
    std::uint64_t mask = 0, inter = 0;
#pragma omp parallel for reduction(+ : mask, inter) num_threads(workers) schedule(static)
    for (int t = 0; t < workers; ++t) {
        const std::size_t lo = std::min(a.size(), static_cast<std::size_t>(t) * chunk);
        const std::size_t n = std::min(a.size(), lo + chunk) - lo;
        const auto r = serial::count_combined(op, a.subspan(lo, n), b.subspan(lo, n), c.subspan(lo, n));
        mask += r.mask;
        inter += r.inter;
    }
    return {mask, inter};
}

} // namespace ovce::kernels
