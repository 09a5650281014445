#pragma once

// Bit-packed mask kernels. Every entry point in `ovce::kernels` has a serial
// twin in `ovce::kernels::serial`; the top-level versions split work across
// OpenMP threads when the input is large and no parallel region is active.
// The serial versions are the reference the tests and benchmarks compare to.

#include <cstddef>
#include <cstdint>
#include <span>

namespace ovce {

using Word = std::uint64_t;
inline constexpr std::size_t kWordBits = 64;

inline constexpr std::size_t words_for_bits(std::size_t bits) {
    return (bits + kWordBits - 1) / kWordBits;
}

namespace kernels {

enum class Combine { And, Or, AndNot };

/// Size of (a combine b) and of its intersection with c.
struct CombinedCounts {
    std::uint64_t mask = 0;
    std::uint64_t inter = 0;
};

namespace serial {
std::uint64_t popcount(std::span<const Word> a);
std::uint64_t count_and(std::span<const Word> a, std::span<const Word> b);
std::uint64_t count_or(std::span<const Word> a, std::span<const Word> b);
std::uint64_t count_andnot(std::span<const Word> a, std::span<const Word> b);

void and_into(std::span<Word> dst, std::span<const Word> src);
void or_into(std::span<Word> dst, std::span<const Word> src);
void andnot_into(std::span<Word> dst, std::span<const Word> src);

// Per-sample counts over planes laid out as `out.size()` consecutive
// blocks of `stride` words.
void per_sample_popcount(std::span<const Word> a, std::size_t stride,
                         std::span<std::uint32_t> out);
void per_sample_count_and(std::span<const Word> a, std::span<const Word> b,
                          std::size_t stride, std::span<std::uint32_t> out);
CombinedCounts count_combined(Combine op, std::span<const Word> a, std::span<const Word> b,
                              std::span<const Word> c);
} // namespace serial

std::uint64_t popcount(std::span<const Word> a);
std::uint64_t count_and(std::span<const Word> a, std::span<const Word> b);
std::uint64_t count_or(std::span<const Word> a, std::span<const Word> b);
std::uint64_t count_andnot(std::span<const Word> a, std::span<const Word> b);

void and_into(std::span<Word> dst, std::span<const Word> src);
void or_into(std::span<Word> dst, std::span<const Word> src);
void andnot_into(std::span<Word> dst, std::span<const Word> src);

void per_sample_popcount(std::span<const Word> a, std::size_t stride,
                         std::span<std::uint32_t> out);
void per_sample_count_and(std::span<const Word> a, std::span<const Word> b,
                          std::size_t stride, std::span<std::uint32_t> out);
CombinedCounts count_combined(Combine op, std::span<const Word> a, std::span<const Word> b,
                              std::span<const Word> c);

/// Minimum number of words before the dispatching kernels fork threads.
inline constexpr std::size_t kParallelThreshold = 1u << 15;

/// Worker count the parallel kernels and probe loops use. Honors the
/// OVCE_WORKERS environment variable, else the OpenMP default.
int worker_count();
void set_worker_count(int n);

} // namespace kernels
} // namespace ovce
