#include "stpc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>

namespace stpc {

void PointCloud::validate() const {
    for (std::size_t i = 0; i < coords.size(); ++i)
        for (double v : coords[i])
            if (!std::isfinite(v)) throw std::invalid_argument("point " + std::to_string(i) + " has non-finite coordinates");
    if (attrs.size() != coords.size() * channels) {
        throw std::invalid_argument("attribute buffer holds " + std::to_string(attrs.size()) + " values, expected " +
                                    std::to_string(coords.size() * channels));
    }
    if (!labels.empty() && labels.size() != coords.size()) {
        throw std::invalid_argument("label count " + std::to_string(labels.size()) + " does not match " +
                                    std::to_string(coords.size()) + " points");
    }
}

double squared_distance(const Vec3& a, const Vec3& b) {
    const double dx = a[0] - b[0];
    const double dy = a[1] - b[1];
    const double dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

NeighborIndex knn(std::span<const Vec3> coords, std::size_t k) {
    const std::size_t n = coords.size();
    if (k == 0) throw std::invalid_argument("knn: K must be positive");
    if (k > n) throw std::invalid_argument("knn: K=" + std::to_string(k) + " exceeds N=" + std::to_string(n));

    NeighborIndex out{n, k, std::vector<std::int64_t>(n * k)};
    std::vector<std::pair<double, std::int64_t>> cand(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) cand[j] = {squared_distance(coords[i], coords[j]), static_cast<std::int64_t>(j)};
        // (distance, index) is a strict total order, so the selected prefix equals a full sort's.
        std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
        for (std::size_t q = 0; q < k; ++q) out.indices[i * k + q] = cand[q].second;
    }
    return out;
}

std::vector<std::int64_t> random_subsample(std::size_t n, std::size_t ratio, std::uint64_t seed) {
    if (ratio == 0) throw std::invalid_argument("random_subsample: ratio must be >= 1");
    std::vector<std::int64_t> all(n);
    std::iota(all.begin(), all.end(), std::int64_t{0});
    if (ratio == 1) return all;
    const std::size_t count = (n + ratio - 1) / ratio;
    std::vector<std::int64_t> picked;
    picked.reserve(count);
    std::mt19937_64 rng(seed);
    std::sample(all.begin(), all.end(), std::back_inserter(picked), count, rng);
    return picked;
}

std::vector<std::int64_t> nearest_upsample(std::span<const Vec3> coarse, std::span<const Vec3> fine) {
    if (coarse.empty()) throw std::invalid_argument("nearest_upsample: coarse cloud is empty");
    std::vector<std::int64_t> map(fine.size());
    for (std::size_t j = 0; j < fine.size(); ++j) {
        std::size_t best = 0;
        double bd = squared_distance(fine[j], coarse[0]);
        for (std::size_t c = 1; c < coarse.size(); ++c) {
            const double d = squared_distance(fine[j], coarse[c]);
            if (d < bd) {
                bd = d;
                best = c;
            }
        }
        map[j] = static_cast<std::int64_t>(best);
    }
    return map;
}

std::vector<double> relative_offsets(std::span<const Vec3> coords, const NeighborIndex& nbr) {
    if (nbr.points != coords.size()) throw std::invalid_argument("relative_offsets: neighbor index built for another cloud");
    std::vector<double> out(nbr.points * nbr.k * 3);
    for (std::size_t i = 0; i < nbr.points; ++i)
        for (std::size_t q = 0; q < nbr.k; ++q) {
            const Vec3& p = coords[i];
            const Vec3& o = coords[static_cast<std::size_t>(nbr.indices[i * nbr.k + q])];
            for (std::size_t d = 0; d < 3; ++d) out[(i * nbr.k + q) * 3 + d] = p[d] - o[d];
        }
    return out;
}

std::vector<Vec3> select(std::span<const Vec3> coords, std::span<const std::int64_t> index) {
    std::vector<Vec3> out;
    out.reserve(index.size());
    for (auto i : index) out.push_back(coords[static_cast<std::size_t>(i)]);
    return out;
}

}  // namespace stpc
