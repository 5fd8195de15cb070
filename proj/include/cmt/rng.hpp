#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "cmt/tensor.hpp"

namespace cmt {

/// SplitMix64 stream. Uniforms take the top 53 bits; normals come from the
/// Box-Muller transform, emitted in pairs (the sine sample is cached).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();
    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n). Uses rejection to stay unbiased.
    std::uint64_t below(std::uint64_t n);
    double normal();

    Tensor uniform_tensor(Shape shape, double lo, double hi);
    Tensor normal_tensor(Shape shape, double stddev = 1.0);

    /// Fisher-Yates permutation of [0, n).
    std::vector<std::size_t> permutation(std::size_t n);

    /// Independent child stream; advances this stream by one draw.
    Rng split() { return Rng(next_u64()); }

private:
    std::uint64_t state_;
    std::optional<double> cached_normal_;
};

}  // namespace cmt
