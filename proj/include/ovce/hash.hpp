#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace ovce {

/// 64-bit FNV-1a, used for content hashes of artifacts (not cryptographic).
class Fnv1a64 {
public:
    void update(std::span<const std::uint8_t> bytes) {
        for (auto b : bytes) {
            state_ ^= b;
            state_ *= 0x100000001b3ULL;
        }
    }
    void update(std::string_view s) {
        update(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
    }
    std::uint64_t digest() const { return state_; }
    std::string hex() const;

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::string content_hash(std::string_view bytes) {
    Fnv1a64 h;
    h.update(bytes);
    return h.hex();
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

} // namespace ovce
