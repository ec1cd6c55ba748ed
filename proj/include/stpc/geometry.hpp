#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace stpc {

using Vec3 = std::array<double, 3>;

// N points with optional per-point attribute channels and labels.
struct PointCloud {
    std::vector<Vec3> coords;
    std::size_t channels = 0;
    std::vector<double> attrs;  // N x channels, row-major
    std::vector<int> labels;    // empty or N entries

    std::size_t size() const noexcept { return coords.size(); }
    bool has_labels() const noexcept { return !labels.empty(); }
    // Throws std::invalid_argument on non-finite coords or mismatched row counts.
    void validate() const;
};

// Row i lists the K nearest points of point i, nearest first.
struct NeighborIndex {
    std::size_t points = 0;
    std::size_t k = 0;
    std::vector<std::int64_t> indices;  // points x k

    std::span<const std::int64_t> row(std::size_t i) const { return {indices.data() + i * k, k}; }
};

double squared_distance(const Vec3& a, const Vec3& b);

// Brute-force KNN; ties break toward the lower index, so row i starts with i.
// Throws std::invalid_argument when k > N or k == 0.
NeighborIndex knn(std::span<const Vec3> coords, std::size_t k);

// ceil(n / ratio) distinct indices in ascending order, drawn uniformly without
// replacement. ratio == 1 returns 0..n-1.
std::vector<std::int64_t> random_subsample(std::size_t n, std::size_t ratio, std::uint64_t seed);

// For each fine point, the index of its nearest coarse point (ties to lowest index).
std::vector<std::int64_t> nearest_upsample(std::span<const Vec3> coarse, std::span<const Vec3> fine);

// N x K x 3 values of coords[i] - coords[nbr(i, k)].
std::vector<double> relative_offsets(std::span<const Vec3> coords, const NeighborIndex& nbr);

std::vector<Vec3> select(std::span<const Vec3> coords, std::span<const std::int64_t> index);

}  // namespace stpc
