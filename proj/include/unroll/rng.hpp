#ifndef UNROLL_RNG_HPP
#define UNROLL_RNG_HPP

#include <cstdint>
#include <cstddef>

namespace unroll {

/// Deterministic 64-bit generator used for every random draw in the project.
///
/// The stream is the splitmix64 sequence of the seed: a counter advanced by
/// the golden-gamma constant, mixed by two xor-multiply rounds.  Identical
/// seeds give bit-identical streams on every platform.  Gaussians come from
/// the polar (rejection) Box-Muller transform; the second variate of each
/// accepted pair is cached, so the spare is part of the generator state.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();

    /// Uniform in [0, 1), 53 random mantissa bits.
    double next_uniform();

    /// Standard normal via polar Box-Muller.
    double next_gaussian();

    /// Uniform integer in [0, bound), exact (rejection sampling). bound >= 1.
    std::uint64_t next_below(std::uint64_t bound);

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Stable FNV-1a hash, used to derive independent per-task seeds from a base
/// seed and a task label so results do not depend on scheduling order.
std::uint64_t stable_hash64(const void* bytes, std::size_t len);

std::uint64_t derive_seed(std::uint64_t base, const char* label, std::uint64_t a, std::uint64_t b);

}  // namespace unroll

#endif
