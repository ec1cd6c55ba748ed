#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "stpc/geometry.hpp"
#include "stpc/tensor.hpp"

namespace testing {

inline stpc::ad::Tensor random_tensor(stpc::ad::Shape shape, std::uint64_t seed, bool requires_grad = false,
                                      double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(stpc::ad::shape_numel(shape));
    for (double& x : v) x = dist(rng);
    return stpc::ad::Tensor(std::move(shape), std::move(v), requires_grad);
}

inline std::vector<stpc::Vec3> random_coords(std::size_t n, std::uint64_t seed, double extent = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-extent, extent);
    std::vector<stpc::Vec3> out(n);
    for (auto& p : out) p = {dist(rng), dist(rng), dist(rng)};
    return out;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace testing
