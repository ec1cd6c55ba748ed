#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "stpc/geometry.hpp"
#include "support.hpp"

using namespace stpc;

namespace {

// Full sort of every candidate by (distance, index).
NeighborIndex knn_oracle(const std::vector<Vec3>& pts, std::size_t k) {
    NeighborIndex out{pts.size(), k, {}};
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::vector<std::size_t> order(pts.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return squared_distance(pts[i], pts[a]) < squared_distance(pts[i], pts[b]);
        });
        for (std::size_t j = 0; j < k; ++j) out.indices.push_back(static_cast<std::int64_t>(order[j]));
    }
    return out;
}

}  // namespace

TEST_CASE("knn small example") {
    const std::vector<Vec3> pts{{0, 0, 0}, {1, 0, 0}, {0, 2, 0}};
    const auto nbr = knn(pts, 2);
    CHECK(nbr.row(0)[0] == 0);
    CHECK(nbr.row(0)[1] == 1);
    CHECK(nbr.row(2)[0] == 2);
    CHECK(nbr.row(2)[1] == 0);
}

TEST_CASE("knn with k = 1 returns self") {
    const auto pts = testing::random_coords(40, 3);
    const auto nbr = knn(pts, 1);
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK(nbr.row(i)[0] == static_cast<std::int64_t>(i));
}

TEST_CASE("knn ranks duplicate points by index") {
    const std::vector<Vec3> pts{{1, 1, 1}, {0, 0, 0}, {1, 1, 1}, {1, 1, 1}};
    const auto nbr = knn(pts, 3);
    CHECK(std::vector<std::int64_t>(nbr.row(3).begin(), nbr.row(3).end()) == std::vector<std::int64_t>{0, 2, 3});
    CHECK(std::vector<std::int64_t>(nbr.row(0).begin(), nbr.row(0).end()) == std::vector<std::int64_t>{0, 2, 3});
}

TEST_CASE("knn rejects bad k") {
    const auto pts = testing::random_coords(5, 1);
    CHECK_THROWS_AS(knn(pts, 6), std::invalid_argument);
    CHECK_THROWS_AS(knn(pts, 0), std::invalid_argument);
}

TEST_CASE("knn matches the full-sort oracle on random clouds") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng() % 128;
        const std::size_t k = 1 + rng() % std::min<std::size_t>(n, 16);
        auto pts = testing::random_coords(n, rng());
        if (trial % 4 == 0)  // snap to a coarse lattice to force ties
            for (auto& p : pts)
                for (double& v : p) v = std::round(v * 2.0) / 2.0;
        const auto got = knn(pts, k);
        const auto want = knn_oracle(pts, k);
        REQUIRE(got.indices == want.indices);
    }
}

TEST_CASE("random subsample cardinality, distinctness and determinism") {
    const auto s = random_subsample(8, 4, 11);
    CHECK(s.size() == 2);
    for (auto i : s) CHECK((i >= 0 && i < 8));
    CHECK(s[0] != s[1]);
    CHECK(random_subsample(8, 4, 11) == s);
    CHECK(random_subsample(1000, 3, 5).size() == 334);

    const auto all = random_subsample(6, 1, 99);
    CHECK(all == std::vector<std::int64_t>{0, 1, 2, 3, 4, 5});

    const auto big = random_subsample(500, 4, 7);
    CHECK(std::set<std::int64_t>(big.begin(), big.end()).size() == big.size());
    CHECK(std::is_sorted(big.begin(), big.end()));
    CHECK(random_subsample(500, 4, 8) != big);
}

TEST_CASE("random subsample draws every index with similar frequency") {
    std::vector<int> hits(20, 0);
    for (std::uint64_t seed = 0; seed < 2000; ++seed)
        for (auto i : random_subsample(20, 4, seed)) ++hits[static_cast<std::size_t>(i)];
    // expected 500 each; 6 sigma for a hypergeometric count is about 100
    for (int h : hits) CHECK((h > 400 && h < 600));
}

TEST_CASE("nearest upsample") {
    const std::vector<Vec3> coarse{{0, 0, 0}, {10, 0, 0}};
    const std::vector<Vec3> fine{{1, 0, 0}, {9, 0, 0}, {5, 0, 0}};
    CHECK(nearest_upsample(coarse, fine) == std::vector<std::int64_t>{0, 1, 0});

    const auto pts = testing::random_coords(30, 4);
    std::vector<std::int64_t> identity(30);
    std::iota(identity.begin(), identity.end(), 0);
    CHECK(nearest_upsample(pts, pts) == identity);

    const std::vector<Vec3> single{{3, 3, 3}};
    CHECK(nearest_upsample(single, pts) == std::vector<std::int64_t>(30, 0));
    CHECK_THROWS_AS(nearest_upsample({}, pts), std::invalid_argument);
}

TEST_CASE("nearest upsample matches an exhaustive scan") {
    const auto coarse = testing::random_coords(25, 5);
    const auto fine = testing::random_coords(200, 6);
    const auto map = nearest_upsample(coarse, fine);
    for (std::size_t j = 0; j < fine.size(); ++j) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < coarse.size(); ++i)
            if (squared_distance(fine[j], coarse[i]) < squared_distance(fine[j], coarse[best])) best = i;
        CHECK(map[j] == static_cast<std::int64_t>(best));
    }
}

TEST_CASE("relative offsets") {
    const std::vector<Vec3> pts{{0, 0, 0}, {1, 2, 3}};
    const NeighborIndex nbr{2, 2, {0, 1, 1, 0}};
    const auto off = relative_offsets(pts, nbr);
    CHECK(std::vector<double>(off.begin(), off.begin() + 3) == std::vector<double>{0, 0, 0});
    CHECK(std::vector<double>(off.begin() + 3, off.begin() + 6) == std::vector<double>{-1, -2, -3});
    CHECK(std::vector<double>(off.begin() + 6, off.begin() + 9) == std::vector<double>{0, 0, 0});
    CHECK(std::vector<double>(off.begin() + 9, off.end()) == std::vector<double>{1, 2, 3});
}

TEST_CASE("point cloud validation") {
    PointCloud c;
    c.coords = {{0, 0, 0}, {1, 1, 1}};
    CHECK_NOTHROW(c.validate());
    c.labels = {0};
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c.labels = {0, 1};
    c.channels = 2;
    c.attrs = {1, 2, 3};
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c.attrs = {1, 2, 3, 4};
    CHECK_NOTHROW(c.validate());
    c.coords[1][2] = std::nan("");
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}
