#pragma once

#include "ovce/kernels.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace ovce {

/// Half-open pixel rectangle [x0, x1) x [y0, y1). x is the column, y the row.
struct Rect {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    std::int64_t area() const {
        return static_cast<std::int64_t>(x1 - x0) * static_cast<std::int64_t>(y1 - y0);
    }
    bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }

    friend bool operator==(const Rect&, const Rect&) = default;
};

/// Empty geometry is `std::nullopt`, never a zero-area rectangle.
using OptRect = std::optional<Rect>;

/// Area of the intersection of two optional rectangles; 0 when either is empty.
std::int64_t overlap_area(const OptRect& a, const OptRect& b);

/// Non-owning view of one bit-packed mask. Bits are row-major over the whole
/// image: pixel (row y, col x) is bit y*width + x.
struct MaskView {
    int width = 0;
    int height = 0;
    std::span<const Word> words;

    bool get(int x, int y) const {
        const std::size_t i = static_cast<std::size_t>(y) * width + x;
        return (words[i / kWordBits] >> (i % kWordBits)) & 1u;
    }
    std::uint64_t count() const { return kernels::serial::popcount(words); }
};

class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(int width, int height);

    static BinaryMask filled(int width, int height);

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

    bool get(int x, int y) const { return view().get(x, y); }
    void set(int x, int y, bool on = true);

    std::uint64_t count() const { return kernels::popcount(bits_); }

    std::span<const Word> words() const { return bits_; }
    std::span<Word> words() { return bits_; }
    MaskView view() const { return {width_, height_, bits_}; }

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<Word> bits_;
};

/// Tight bounding box of the set pixels.
OptRect bounding_box(const MaskView& m);

/// A maximum-area axis-aligned rectangle made only of set pixels, via the
/// histogram-of-heights stack sweep (O(width*height)). Ties keep the first
/// rectangle found in row-major sweep order.
OptRect largest_inscribed_rectangle(const MaskView& m);

/// Nearest-neighbour resampling to (width, height).
BinaryMask resample_mask(const MaskView& m, int width, int height);
inline BinaryMask resample_mask(const BinaryMask& m, int width, int height) {
    return resample_mask(m.view(), width, height);
}

/// Source index used by nearest-neighbour resampling along one axis.
inline int nearest_source_index(int dst, int dst_len, int src_len) {
    // floor((dst + 0.5) * src / dst), integer form
    const auto i = (static_cast<std::int64_t>(2 * dst + 1) * src_len) / (2 * static_cast<std::int64_t>(dst_len));
    return static_cast<int>(i < src_len ? i : src_len - 1);
}

/// A stack of equally-shaped masks, one per sample, stored back to back with
/// each sample padded to a whole number of words.
class MaskPlane {
public:
    MaskPlane() = default;
    MaskPlane(std::size_t samples, int width, int height);

    std::size_t samples() const { return samples_; }
    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t stride() const { return stride_; }

    std::span<const Word> words() const { return data_; }
    std::span<Word> words() { return data_; }
    std::span<const Word> sample_words(std::size_t s) const {
        return std::span<const Word>(data_).subspan(s * stride_, stride_);
    }
    std::span<Word> sample_words(std::size_t s) {
        return std::span<Word>(data_).subspan(s * stride_, stride_);
    }
    MaskView sample(std::size_t s) const { return {width_, height_, sample_words(s)}; }
    BinaryMask sample_mask(std::size_t s) const;
    void set_sample(std::size_t s, const BinaryMask& m);
    void set(std::size_t s, int x, int y, bool on = true);

    bool same_shape(const MaskPlane& o) const {
        return samples_ == o.samples_ && width_ == o.width_ && height_ == o.height_;
    }

    friend bool operator==(const MaskPlane&, const MaskPlane&) = default;

private:
    std::size_t samples_ = 0;
    int width_ = 0;
    int height_ = 0;
    std::size_t stride_ = 0;
    std::vector<Word> data_;
};

} // namespace ovce
