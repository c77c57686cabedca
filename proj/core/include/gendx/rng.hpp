#pragma once

#include <cstdint>
#include <initializer_list>

namespace gendx {

/// Deterministic counter-based random stream.
///
/// Word i of the stream is the splitmix64 finalizer applied to
/// seed + (i+1) * 0x9E3779B97F4A7C15.  The sequence therefore depends only on
/// the seed and the number of draws so far, never on platform or compiler;
/// every stochastic routine in this library takes one of these streams so
/// that runs are reproducible bit for bit.
///
/// normal() uses the Box-Muller transform and consumes exactly two words per
/// call (no caching of the second deviate), keeping draw positions easy to
/// reason about when freezing test vectors.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t next_u64();

    /// Uniform on [0, 1), 53-bit resolution.
    double uniform();

    /// Uniform on (0, 1]; safe as a log argument.
    double uniform_pos();

    /// Standard normal deviate.
    double normal();

    std::uint64_t seed() const { return seed_; }
    std::uint64_t draws() const { return counter_; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

/// Hash-mixes `base` with the given words to derive an independent sub-stream
/// seed, e.g. per cross-validation cell or per synthetic subject.  Stable
/// across platforms; word order matters.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> words);

}  // namespace gendx
