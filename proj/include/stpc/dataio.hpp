#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "stpc/geometry.hpp"

namespace stpc {

enum class SyntheticKind { OrientedPlanes, CornerShapes, RandomBlobs };

std::string_view to_string(SyntheticKind kind);
SyntheticKind parse_synthetic_kind(std::string_view name);  // throws ConfigError("kind", ...)

struct SyntheticSpec {
    SyntheticKind kind = SyntheticKind::OrientedPlanes;
    std::size_t clouds = 20;
    std::size_t points = 1024;
    std::size_t classes = 3;
    double noise = 0.01;
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError naming the field
};

struct SyntheticSample {
    PointCloud cloud;
    // Normal of the surface each point was drawn from; zero for blob clouds.
    std::vector<Vec3> normals;
};

// oriented-planes: square patches in separate grid cells, each tilted slightly
//   away from one reference direction; label = the patch normal's bin.
// corner-shapes: axis-aligned corners with 1, 2 or 3 faces; label = face count - 1.
// random-blobs: isotropic Gaussian clusters; label = cluster class.
std::vector<SyntheticSample> gen_synthetic(const SyntheticSpec& spec);

// Unit reference directions for orientation bins: coordinate axes for up to
// three classes, a Fibonacci lattice over the upper hemisphere beyond that.
std::vector<Vec3> reference_directions(std::size_t classes);
// Index of the reference with the largest |cos| to `normal`.
int orientation_bin(const Vec3& normal, const std::vector<Vec3>& refs);

// Text point format. Header `stpc-xyz v1 <channels> <has_label>`, then one point
// per line: `x y z [c1 .. cC] [label]`. Lines starting with '#' are comments.
void write_cloud(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud read_cloud(const std::filesystem::path& path);
std::string format_cloud(const PointCloud& cloud);
PointCloud parse_cloud(std::string_view text);

// One integer label per line.
void write_predictions(const std::filesystem::path& path, const std::vector<int>& labels);
std::vector<int> read_predictions(const std::filesystem::path& path);
std::vector<int> parse_predictions(std::string_view text);

// A dataset directory holds cloud files plus `manifest.txt` naming them in order.
void write_dataset(const std::filesystem::path& dir, const std::vector<PointCloud>& clouds);
std::vector<PointCloud> read_dataset(const std::filesystem::path& dir);

}  // namespace stpc
