#include "unroll/rng.hpp"

#include <cmath>
#include <cstring>

namespace unroll {

std::uint64_t SeededRng::next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double SeededRng::next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::next_gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * next_uniform() - 1.0;
        v = 2.0 * next_uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
}

std::uint64_t SeededRng::next_below(std::uint64_t bound) {
    // Rejection below the largest multiple of bound: exactly uniform.
    const std::uint64_t limit = bound * (~0ULL / bound);
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % bound;
}

std::uint64_t stable_hash64(const void* bytes, std::size_t len) {
    const unsigned char* p = static_cast<const unsigned char*>(bytes);
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::uint64_t derive_seed(std::uint64_t base, const char* label, std::uint64_t a, std::uint64_t b) {
    std::uint64_t h = stable_hash64(label, std::strlen(label));
    h ^= stable_hash64(&a, sizeof a) + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
    h ^= stable_hash64(&b, sizeof b) + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
    return base ^ h;
}

}  // namespace unroll
