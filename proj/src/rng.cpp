#include "cmt/rng.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "cmt/errors.hpp"

namespace cmt {

std::uint64_t Rng::next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw ArgumentError("Rng::below(0)");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

double Rng::normal() {
    if (cached_normal_) {
        const double v = *cached_normal_;
        cached_normal_.reset();
        return v;
    }
    // 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    cached_normal_ = r * std::sin(theta);
    return r * std::cos(theta);
}

Tensor Rng::uniform_tensor(Shape shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = uniform(lo, hi);
    return t;
}

Tensor Rng::normal_tensor(Shape shape, double stddev) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = stddev * normal();
    return t;
}

std::vector<std::size_t> Rng::permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(below(i));
        std::swap(p[i - 1], p[j]);
    }
    return p;
}

}  // namespace cmt
