#include "ovce/bitmask.hpp"

#include "ovce/error.hpp"

#include <algorithm>
#include <bit>
#include <cassert>

namespace ovce {

std::int64_t overlap_area(const OptRect& a, const OptRect& b) {
    if (!a || !b) return 0;
    const int x0 = std::max(a->x0, b->x0);
    const int y0 = std::max(a->y0, b->y0);
    const int x1 = std::min(a->x1, b->x1);
    const int y1 = std::min(a->y1, b->y1);
    if (x1 <= x0 || y1 <= y0) return 0;
    return static_cast<std::int64_t>(x1 - x0) * (y1 - y0);
}

BinaryMask::BinaryMask(int width, int height)
    : width_(width), height_(height),
      bits_(words_for_bits(static_cast<std::size_t>(width) * height), 0) {
    assert(width >= 0 && height >= 0);
}

BinaryMask BinaryMask::filled(int width, int height) {
    BinaryMask m(width, height);
    const std::size_t n = m.pixel_count();
    std::fill(m.bits_.begin(), m.bits_.end(), ~Word{0});
    if (n % kWordBits) m.bits_.back() = (Word{1} << (n % kWordBits)) - 1;
    return m;
}

void BinaryMask::set(int x, int y, bool on) {
    const std::size_t i = static_cast<std::size_t>(y) * width_ + x;
    const Word bit = Word{1} << (i % kWordBits);
    if (on)
        bits_[i / kWordBits] |= bit;
    else
        bits_[i / kWordBits] &= ~bit;
}

OptRect bounding_box(const MaskView& m) {
    int x0 = m.width, y0 = m.height, x1 = -1, y1 = -1;
    const std::size_t n = static_cast<std::size_t>(m.width) * m.height;
    for (std::size_t w = 0; w < m.words.size(); ++w) {
        Word bits = m.words[w];
        while (bits) {
            const std::size_t i = w * kWordBits + std::countr_zero(bits);
            bits &= bits - 1;
            if (i >= n) break;
            const int y = static_cast<int>(i / m.width);
            const int x = static_cast<int>(i % m.width);
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
        }
    }
    if (x1 < 0) return std::nullopt;
    return Rect{x0, y0, x1 + 1, y1 + 1};
}

OptRect largest_inscribed_rectangle(const MaskView& m) {
    if (m.width == 0 || m.height == 0) return std::nullopt;
    std::vector<int> heights(m.width, 0);
    std::vector<int> stack;
    stack.reserve(m.width + 1);
    std::int64_t best_area = 0;
    Rect best{};

    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) heights[x] = m.get(x, y) ? heights[x] + 1 : 0;

        stack.clear();
        for (int x = 0; x <= m.width; ++x) {
            const int h = x < m.width ? heights[x] : 0;
            while (!stack.empty() && heights[stack.back()] >= h) {
                const int top = stack.back();
                stack.pop_back();
                const int bar = heights[top];
                if (bar == 0) continue;
                const int left = stack.empty() ? 0 : stack.back() + 1;
                const std::int64_t area = static_cast<std::int64_t>(bar) * (x - left);
                if (area > best_area) {
                    best_area = area;
                    best = Rect{left, y - bar + 1, x, y + 1};
                }
            }
            stack.push_back(x);
        }
    }
    if (best_area == 0) return std::nullopt;
    return best;
}

BinaryMask resample_mask(const MaskView& m, int width, int height) {
    if (width < 1 || height < 1) throw ShapeMismatch("resample target must be at least 1x1");
    BinaryMask out(width, height);
    if (width == m.width && height == m.height) {
        std::copy(m.words.begin(), m.words.end(), out.words().begin());
        return out;
    }
    std::vector<int> src_x(width);
    for (int x = 0; x < width; ++x) src_x[x] = nearest_source_index(x, width, m.width);
    for (int y = 0; y < height; ++y) {
        const int sy = nearest_source_index(y, height, m.height);
        for (int x = 0; x < width; ++x)
            if (m.get(src_x[x], sy)) out.set(x, y);
    }
    return out;
}

MaskPlane::MaskPlane(std::size_t samples, int width, int height)
    : samples_(samples), width_(width), height_(height),
      stride_(words_for_bits(static_cast<std::size_t>(width) * height)),
      data_(samples * stride_, 0) {}

BinaryMask MaskPlane::sample_mask(std::size_t s) const {
    BinaryMask m(width_, height_);
    auto src = sample_words(s);
    std::copy(src.begin(), src.end(), m.words().begin());
    return m;
}

void MaskPlane::set_sample(std::size_t s, const BinaryMask& m) {
    if (m.width() != width_ || m.height() != height_)
        throw ShapeMismatch("mask shape does not match plane");
    auto dst = sample_words(s);
    std::copy(m.words().begin(), m.words().end(), dst.begin());
}

void MaskPlane::set(std::size_t s, int x, int y, bool on) {
    const std::size_t i = static_cast<std::size_t>(y) * width_ + x;
    Word& w = data_[s * stride_ + i / kWordBits];
    const Word bit = Word{1} << (i % kWordBits);
    if (on)
        w |= bit;
    else
        w &= ~bit;
}

} // namespace ovce
