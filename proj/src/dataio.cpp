#include "stpc/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "stpc/error.hpp"
#include "stpc/layers.hpp"

namespace stpc {

namespace fs = std::filesystem;

std::string_view to_string(SyntheticKind kind) {
    switch (kind) {
        case SyntheticKind::OrientedPlanes: return "oriented-planes";
        case SyntheticKind::CornerShapes: return "corner-shapes";
        case SyntheticKind::RandomBlobs: return "random-blobs";
    }
    return "?";
}

SyntheticKind parse_synthetic_kind(std::string_view name) {
    for (auto k : {SyntheticKind::OrientedPlanes, SyntheticKind::CornerShapes, SyntheticKind::RandomBlobs})
        if (name == to_string(k)) return k;
    throw ConfigError("kind", "unknown dataset kind '" + std::string(name) + "'");
}

void SyntheticSpec::validate() const {
    if (clouds == 0) throw ConfigError("clouds", "must be at least 1");
    if (points == 0) throw ConfigError("points", "must be at least 1");
    if (classes == 0) throw ConfigError("classes", "must be at least 1");
    if (kind == SyntheticKind::CornerShapes && classes > 3) throw ConfigError("classes", "corner-shapes supports at most 3 classes");
    if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("noise", "must be a finite value >= 0");
}

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kCell = 1.5;   // grid cell edge
constexpr double kPatch = 1.0;  // patch / corner face edge

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

Vec3 normalized(const Vec3& v) {
    const double n = std::sqrt(dot(v, v));
    return {v[0] / n, v[1] / n, v[2] / n};
}

// Orthonormal tangent pair for `n`, rotated in-plane by `angle`.
std::pair<Vec3, Vec3> tangent_frame(const Vec3& n, double angle) {
    const Vec3 helper = std::abs(n[0]) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    const Vec3 t1 = normalized(cross(n, helper));
    const Vec3 t2 = cross(n, t1);
    const double c = std::cos(angle), s = std::sin(angle);
    Vec3 u{}, v{};
    for (int d = 0; d < 3; ++d) {
        u[d] = c * t1[d] + s * t2[d];
        v[d] = -s * t1[d] + c * t2[d];
    }
    return {u, v};
}

// Splits `total` into `parts` near-equal counts, larger shares first.
std::vector<std::size_t> split_even(std::size_t total, std::size_t parts) {
    std::vector<std::size_t> out(parts, total / parts);
    for (std::size_t i = 0; i < total % parts; ++i) ++out[i];
    return out;
}

struct CloudBuilder {
    SyntheticSample sample;
    void add(const Vec3& p, const Vec3& normal, int label) {
        sample.cloud.coords.push_back(p);
        sample.cloud.labels.push_back(label);
        sample.normals.push_back(normal);
    }
    // Applies a seeded permutation so point order carries no class information.
    SyntheticSample finish(std::mt19937_64& rng) {
        std::vector<std::size_t> perm(sample.cloud.size());
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        SyntheticSample out;
        for (auto i : perm) {
            out.cloud.coords.push_back(sample.cloud.coords[i]);
            out.cloud.labels.push_back(sample.cloud.labels[i]);
            out.normals.push_back(sample.normals[i]);
        }
        return out;
    }
};

// Centers of `count` distinct cells of a cubic grid large enough to hold them.
std::vector<Vec3> cell_centers(std::size_t count, std::mt19937_64& rng) {
    std::size_t g = 3;
    while (g * g * g < 2 * count) ++g;
    std::vector<std::size_t> cells(g * g * g);
    std::iota(cells.begin(), cells.end(), std::size_t{0});
    std::shuffle(cells.begin(), cells.end(), rng);
    std::vector<Vec3> out;
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t c = cells[i];
        out.push_back({(static_cast<double>(c % g) + 0.5) * kCell, (static_cast<double>((c / g) % g) + 0.5) * kCell,
                       (static_cast<double>(c / (g * g)) + 0.5) * kCell});
    }
    return out;
}

double max_tilt(const std::vector<Vec3>& refs) {
    double min_sep = kPi / 2;
    for (std::size_t i = 0; i < refs.size(); ++i)
        for (std::size_t j = i + 1; j < refs.size(); ++j)
            min_sep = std::min(min_sep, std::acos(std::min(1.0, std::abs(dot(refs[i], refs[j])))));
    return std::min(15.0 * kPi / 180.0, 0.4 * min_sep);
}

SyntheticSample oriented_planes(const SyntheticSpec& spec, std::mt19937_64& rng) {
    const auto refs = reference_directions(spec.classes);
    const double tilt = max_tilt(refs);
    constexpr std::size_t kPatchesPerClass = 2;
    const auto per_class = split_even(spec.points, spec.classes);
    const auto centers = cell_centers(spec.classes * kPatchesPerClass, rng);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    CloudBuilder b;
    std::size_t patch = 0;
    for (std::size_t c = 0; c < spec.classes; ++c) {
        const auto per_patch = split_even(per_class[c], kPatchesPerClass);
        for (std::size_t q = 0; q < kPatchesPerClass; ++q, ++patch) {
            Vec3 normal;
            do {
                const auto [w, unused] = tangent_frame(refs[c], 2.0 * kPi * unit(rng));
                const double theta = tilt * unit(rng);
                for (int d = 0; d < 3; ++d) normal[d] = std::cos(theta) * refs[c][d] + std::sin(theta) * w[d];
                normal = normalized(normal);
            } while (orientation_bin(normal, refs) != static_cast<int>(c));
            const auto [u, v] = tangent_frame(normal, 2.0 * kPi * unit(rng));
            const Vec3& center = centers[patch];
            for (std::size_t i = 0; i < per_patch[q]; ++i) {
                const double a = (unit(rng) - 0.5) * kPatch;
                const double bb = (unit(rng) - 0.5) * kPatch;
                const double h = spec.noise > 0.0 ? spec.noise * gauss(rng) : 0.0;
                Vec3 p;
                for (int d = 0; d < 3; ++d) p[d] = center[d] + a * u[d] + bb * v[d] + h * normal[d];
                b.add(p, normal, static_cast<int>(c));
            }
        }
    }
    return b.finish(rng);
}

SyntheticSample corner_shapes(const SyntheticSpec& spec, std::mt19937_64& rng) {
    constexpr std::size_t kCornersPerClass = 2;
    const auto per_class = split_even(spec.points, spec.classes);
    const auto centers = cell_centers(spec.classes * kCornersPerClass, rng);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    CloudBuilder b;
    std::size_t corner = 0;
    for (std::size_t c = 0; c < spec.classes; ++c) {
        const std::size_t faces = c + 1;
        const auto per_corner = split_even(per_class[c], kCornersPerClass);
        for (std::size_t q = 0; q < kCornersPerClass; ++q, ++corner) {
            Vec3 sign;
            for (auto& s : sign) s = unit(rng) < 0.5 ? -1.0 : 1.0;
            const Vec3 origin{centers[corner][0] - sign[0] * kPatch / 2, centers[corner][1] - sign[1] * kPatch / 2,
                              centers[corner][2] - sign[2] * kPatch / 2};
            const auto per_face = split_even(per_corner[q], faces);
            for (std::size_t f = 0; f < faces; ++f) {
                // face f lies in the plane where axis f is fixed at the corner origin
                Vec3 normal{0, 0, 0};
                normal[f] = sign[f];
                for (std::size_t i = 0; i < per_face[f]; ++i) {
                    Vec3 p = origin;
                    for (std::size_t d = 0; d < 3; ++d)
                        if (d != f) p[d] += sign[d] * unit(rng) * kPatch;
                    if (spec.noise > 0.0) p[f] += spec.noise * gauss(rng);
                    b.add(p, normal, static_cast<int>(c));
                }
            }
        }
    }
    return b.finish(rng);
}

SyntheticSample random_blobs(const SyntheticSpec& spec, std::mt19937_64& rng) {
    constexpr std::size_t kBlobsPerClass = 2;
    constexpr double kSpread = 0.25;
    const auto per_class = split_even(spec.points, spec.classes);
    const auto centers = cell_centers(spec.classes * kBlobsPerClass, rng);
    std::normal_distribution<double> gauss(0.0, 1.0);

    CloudBuilder b;
    std::size_t blob = 0;
    for (std::size_t c = 0; c < spec.classes; ++c) {
        const auto per_blob = split_even(per_class[c], kBlobsPerClass);
        for (std::size_t q = 0; q < kBlobsPerClass; ++q, ++blob) {
            for (std::size_t i = 0; i < per_blob[q]; ++i) {
                Vec3 p;
                for (int d = 0; d < 3; ++d) p[d] = centers[blob][d] + (kSpread + spec.noise) * gauss(rng);
                b.add(p, Vec3{0, 0, 0}, static_cast<int>(c));
            }
        }
    }
    return b.finish(rng);
}

}  // namespace

std::vector<Vec3> reference_directions(std::size_t classes) {
    std::vector<Vec3> refs;
    if (classes <= 3) {
        for (std::size_t c = 0; c < classes; ++c) {
            Vec3 axis{0, 0, 0};
            axis[c] = 1.0;
            refs.push_back(axis);
        }
        return refs;
    }
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    for (std::size_t i = 0; i < classes; ++i) {
        const double z = 1.0 - (static_cast<double>(i) + 0.5) / static_cast<double>(classes);
        const double r = std::sqrt(1.0 - z * z);
        const double phi = golden * static_cast<double>(i);
        refs.push_back({r * std::cos(phi), r * std::sin(phi), z});
    }
    return refs;
}

int orientation_bin(const Vec3& normal, const std::vector<Vec3>& refs) {
    int best = 0;
    double bv = -1.0;
    for (std::size_t i = 0; i < refs.size(); ++i) {
        const double v = std::abs(dot(normal, refs[i]));
        if (v > bv) {
            bv = v;
            best = static_cast<int>(i);
        }
    }
    return best;
}

std::vector<SyntheticSample> gen_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    std::vector<SyntheticSample> out;
    for (std::size_t i = 0; i < spec.clouds; ++i) {
        std::mt19937_64 rng(mix_seed(spec.seed, i));
        switch (spec.kind) {
            case SyntheticKind::OrientedPlanes: out.push_back(oriented_planes(spec, rng)); break;
            case SyntheticKind::CornerShapes: out.push_back(corner_shapes(spec, rng)); break;
            case SyntheticKind::RandomBlobs: out.push_back(random_blobs(spec, rng)); break;
        }
    }
    return out;
}

// ---- stpc-xyz text format ----

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        const std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

template <typename F>
void for_each_line(std::string_view text, F&& f) {
    std::size_t lineno = 0, pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        f(++lineno, line);
        pos = end + 1;
    }
}

}  // namespace

std::string format_cloud(const PointCloud& cloud) {
    cloud.validate();
    std::ostringstream os;
    os << std::setprecision(17);
    os << "stpc-xyz v1 " << cloud.channels << ' ' << (cloud.has_labels() ? 1 : 0) << '\n';
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        os << cloud.coords[i][0] << ' ' << cloud.coords[i][1] << ' ' << cloud.coords[i][2];
        for (std::size_t c = 0; c < cloud.channels; ++c) os << ' ' << cloud.attrs[i * cloud.channels + c];
        if (cloud.has_labels()) os << ' ' << cloud.labels[i];
        os << '\n';
    }
    return os.str();
}

PointCloud parse_cloud(std::string_view text) {
    PointCloud cloud;
    bool have_header = false;
    bool has_label = false;
    for_each_line(text, [&](std::size_t lineno, std::string_view line) {
        const auto fields = split_fields(line);
        if (fields.empty() || fields[0].front() == '#') return;
        if (!have_header) {
            std::size_t channels = 0;
            int flag = 0;
            if (fields.size() != 4 || fields[0] != "stpc-xyz")
                throw FormatError(lineno, "expected header 'stpc-xyz v1 <channels> <has_label>'");
            if (fields[1] != "v1") throw FormatError(lineno, "unsupported format version '" + std::string(fields[1]) + "'");
            if (!parse_number(fields[2], channels) || !parse_number(fields[3], flag) || (flag != 0 && flag != 1))
                throw FormatError(lineno, "malformed header fields");
            cloud.channels = channels;
            has_label = flag == 1;
            have_header = true;
            return;
        }
        const std::size_t expected = 3 + cloud.channels + (has_label ? 1 : 0);
        if (fields.size() != expected) {
            throw FormatError(lineno, "expected " + std::to_string(expected) + " fields, found " +
                                          std::to_string(fields.size()));
        }
        Vec3 p;
        for (std::size_t d = 0; d < 3; ++d)
            if (!parse_number(fields[d], p[d]) || !std::isfinite(p[d]))
                throw FormatError(lineno, "bad coordinate '" + std::string(fields[d]) + "'");
        cloud.coords.push_back(p);
        for (std::size_t c = 0; c < cloud.channels; ++c) {
            double v = 0.0;
            if (!parse_number(fields[3 + c], v)) throw FormatError(lineno, "bad attribute '" + std::string(fields[3 + c]) + "'");
            cloud.attrs.push_back(v);
        }
        if (has_label) {
            int label = 0;
            if (!parse_number(fields.back(), label)) throw FormatError(lineno, "bad label '" + std::string(fields.back()) + "'");
            cloud.labels.push_back(label);
        }
    });
    if (!have_header) throw FormatError(0, "missing stpc-xyz header");
    return cloud;
}

void write_cloud(const fs::path& path, const PointCloud& cloud) { write_file(path, format_cloud(cloud)); }

PointCloud read_cloud(const fs::path& path) {
    try {
        return parse_cloud(read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(e.line(), path.string() + ": " + std::string(e.what()));
    }
}

std::vector<int> parse_predictions(std::string_view text) {
    std::vector<int> labels;
    for_each_line(text, [&](std::size_t lineno, std::string_view line) {
        const auto fields = split_fields(line);
        if (fields.empty()) return;
        int v = 0;
        if (fields.size() != 1 || !parse_number(fields[0], v))
            throw FormatError(lineno, "expected one integer label, got '" + std::string(line) + "'");
        labels.push_back(v);
    });
    return labels;
}

void write_predictions(const fs::path& path, const std::vector<int>& labels) {
    std::string text;
    for (int v : labels) text += std::to_string(v) + '\n';
    write_file(path, text);
}

std::vector<int> read_predictions(const fs::path& path) { return parse_predictions(read_file(path)); }

void write_dataset(const fs::path& dir, const std::vector<PointCloud>& clouds) {
    fs::create_directories(dir);
    std::string manifest;
    for (std::size_t i = 0; i < clouds.size(); ++i) {
        std::ostringstream name;
        name << "cloud_" << std::setw(4) << std::setfill('0') << i << ".xyz";
        write_cloud(dir / name.str(), clouds[i]);
        manifest += name.str() + '\n';
    }
    write_file(dir / "manifest.txt", manifest);
}

std::vector<PointCloud> read_dataset(const fs::path& dir) {
    const fs::path manifest = dir / "manifest.txt";
    if (!fs::exists(manifest)) throw std::runtime_error("no manifest.txt in " + dir.string());
    std::vector<PointCloud> clouds;
    for_each_line(read_file(manifest), [&](std::size_t, std::string_view line) {
        const auto fields = split_fields(line);
        if (fields.empty() || fields[0].front() == '#') return;
        clouds.push_back(read_cloud(dir / std::string(fields[0])));
    });
    return clouds;
}

}  // namespace stpc
