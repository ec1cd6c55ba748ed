#include "stpc/stpc_layer.hpp"

#include <cmath>
#include <stdexcept>

#include "stpc/error.hpp"
#include "stpc/ops.hpp"

namespace stpc {

std::string_view to_string(Aggregation a) {
    switch (a) {
        case Aggregation::Anisotropic: return "anisotropic";
        case Aggregation::Max: return "max";
        case Aggregation::Mean: return "mean";
        case Aggregation::Sum: return "sum";
        case Aggregation::Unordered: return "none";
    }
    return "?";
}

std::string_view to_string(FeatureInput f) { return f == FeatureInput::Absolute ? "absolute" : "relative"; }

Aggregation parse_aggregation(std::string_view name) {
    for (auto a : {Aggregation::Anisotropic, Aggregation::Max, Aggregation::Mean, Aggregation::Sum,
                   Aggregation::Unordered})
        if (name == to_string(a)) return a;
    throw std::invalid_argument("unknown aggregation mode '" + std::string(name) + "'");
}

FeatureInput parse_feature_input(std::string_view name) {
    if (name == "absolute") return FeatureInput::Absolute;
    if (name == "relative") return FeatureInput::Relative;
    throw std::invalid_argument("unknown feature input '" + std::string(name) + "'");
}

void StpcLayerParams::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    if (spatial_map.hidden.weight.defined()) spatial_map.collect(prefix + ".spatial_map", out);
    feature_map.collect(prefix + ".feature_map", out);
    if (update_map.hidden.weight.defined()) update_map.collect(prefix + ".update_map", out);
    out.push_back({prefix + ".conv.weight", conv_weight});
    out.push_back({prefix + ".conv.bias", conv_bias});
}

namespace {

ad::Tensor coords_tensor(std::span<const Vec3> coords) {
    std::vector<double> v;
    v.reserve(coords.size() * 3);
    for (const auto& p : coords) v.insert(v.end(), p.begin(), p.end());
    return ad::Tensor({coords.size(), 3}, std::move(v));
}

void check_input(const LayerInput& input, const NeighborIndex& nbr) {
    if (nbr.points != input.coords.size()) {
        throw ShapeError("neighbor index covers " + std::to_string(nbr.points) + " points, cloud has " +
                         std::to_string(input.coords.size()));
    }
    if (input.features.defined() && (input.features.rank() != 2 || input.features.dim(0) != input.coords.size())) {
        throw ShapeError("layer features " + ad::shape_str(input.features.shape()) + " do not match " +
                         std::to_string(input.coords.size()) + " points");
    }
}

}  // namespace

ad::Tensor update_dictionary(const ad::Tensor& atoms, const Perceptron& update_map) { return update_map(atoms); }

ad::Tensor decorrelation_loss(const ad::Tensor& atoms, double eps) {
    if (atoms.rank() != 2) throw ShapeError("decorrelation_loss: atoms must be [M, c], got " + ad::shape_str(atoms.shape()));
    const std::size_t m = atoms.dim(0);
    std::vector<double> mask(m * m, 1.0);
    for (std::size_t i = 0; i < m; ++i) mask[i * m + i] = 0.0;
    const ad::Tensor sim = ad::cosine_similarity(atoms, atoms, eps);
    return ad::sum_all(ad::mul(sim, ad::Tensor({m, m}, std::move(mask))));
}

ad::Tensor spatial_direction_features(const ad::Tensor& offsets, const Perceptron& spatial_map) {
    if (offsets.rank() != 3 || offsets.dim(2) != 3)
        throw ShapeError("spatial_direction_features: offsets must be [N, K, 3], got " + ad::shape_str(offsets.shape()));
    const std::size_t n = offsets.dim(0), k = offsets.dim(1);
    const ad::Tensor d = spatial_map(ad::reshape(offsets, {n * k, 3}));
    return ad::reshape(d, {n, k, d.dim(1)});
}

EncodingCoefficients encode_directions(const ad::Tensor& directions, const ad::Tensor& atoms, double tau, double eps) {
    if (directions.rank() != 3 || atoms.rank() != 2 || directions.dim(2) != atoms.dim(1)) {
        throw ShapeError("encode_directions: directions " + ad::shape_str(directions.shape()) + " vs atoms " +
                         ad::shape_str(atoms.shape()));
    }
    const std::size_t n = directions.dim(0), k = directions.dim(1), c = directions.dim(2), m = atoms.dim(0);
    const ad::Tensor sim = ad::cosine_similarity(ad::reshape(directions, {n * k, c}), atoms, eps);
    const ad::Tensor raw = ad::softmax(sim, 1);
    const ad::Tensor alpha = ad::threshold(raw, tau);
    return {ad::reshape(raw, {n, k, m}), ad::reshape(alpha, {n, k, m}), tau};
}

ad::Tensor neighbor_features(const LayerInput& input, const NeighborIndex& nbr, const Perceptron& feature_map,
                             FeatureInput mode) {
    check_input(input, nbr);
    const std::size_t n = nbr.points, k = nbr.k;
    if (mode == FeatureInput::Absolute) {
        ad::Tensor x = coords_tensor(input.coords);
        if (input.features.defined()) x = ad::concat_last({x, input.features});
        const ad::Tensor f = feature_map(x);
        const std::size_t width = f.dim(1);
        return ad::reshape(ad::gather_rows(f, nbr.indices), {n, k, width});
    }
    std::vector<double> rel = relative_offsets(input.coords, nbr);
    for (double& v : rel) v = -v;  // p_k - p_i
    ad::Tensor x({n * k, 3}, std::move(rel));
    if (input.features.defined()) x = ad::concat_last({x, ad::gather_rows(input.features, nbr.indices)});
    const ad::Tensor f = feature_map(x);
    return ad::reshape(f, {n, k, f.dim(1)});
}

ad::Tensor spatial_transform(const ad::Tensor& alpha, const ad::Tensor& neighbor_feats) {
    if (alpha.rank() != 3 || neighbor_feats.rank() != 3 || alpha.dim(0) != neighbor_feats.dim(0) ||
        alpha.dim(1) != neighbor_feats.dim(1)) {
        throw ShapeError("spatial_transform: coefficients " + ad::shape_str(alpha.shape()) + " vs features " +
                         ad::shape_str(neighbor_feats.shape()));
    }
    return ad::matmul(alpha, neighbor_feats, true, false);
}

ad::Tensor spatial_transform(const EncodingCoefficients& coeffs, const LayerInput& input, const NeighborIndex& nbr,
                             const Perceptron& feature_map, FeatureInput mode) {
    return spatial_transform(coeffs.alpha, neighbor_features(input, nbr, feature_map, mode));
}

ad::Tensor anisotropic_conv(const ad::Tensor& x_tilde, const ad::Tensor& weight, const ad::Tensor& bias) {
    if (x_tilde.rank() != 3 || weight.rank() != 3 || x_tilde.dim(1) != weight.dim(0) || x_tilde.dim(2) != weight.dim(1)) {
        throw ShapeError("anisotropic_conv: features " + ad::shape_str(x_tilde.shape()) + " vs weights " +
                         ad::shape_str(weight.shape()));
    }
    const std::size_t n = x_tilde.dim(0), m = x_tilde.dim(1), cf = x_tilde.dim(2), cout = weight.dim(2);
    const ad::Tensor flat = ad::reshape(x_tilde, {n, m * cf});
    const ad::Tensor w = ad::reshape(weight, {m * cf, cout});
    return ad::add(ad::matmul(flat, w), bias);
}

StpcOutput stpc_layer_forward(const LayerInput& input, const NeighborIndex& nbr, const StpcLayerParams& params,
                              const ad::Tensor& prev_atoms, const StpcOptions& options) {
    check_input(input, nbr);
    const std::size_t n = nbr.points, k = nbr.k;
    ad::Tensor atoms = update_dictionary(prev_atoms, params.update_map);
    if (atoms.dim(0) != params.conv_weight.dim(0)) {
        throw ShapeError("stpc layer: " + std::to_string(atoms.dim(0)) + " atoms but " +
                         std::to_string(params.conv_weight.dim(0)) + " convolution slots");
    }
    ad::Tensor offsets({n, k, 3}, relative_offsets(input.coords, nbr));
    const ad::Tensor directions = spatial_direction_features(offsets, params.spatial_map);
    EncodingCoefficients coeffs = encode_directions(directions, atoms, options.tau, options.eps);
    const ad::Tensor feats = neighbor_features(input, nbr, params.feature_map, options.feature_input);
    const ad::Tensor x_tilde = spatial_transform(coeffs.alpha, feats);
    ad::Tensor out = anisotropic_conv(x_tilde, params.conv_weight, params.conv_bias);
    ad::Tensor decor = decorrelation_loss(atoms, options.eps);
    return {std::move(out), std::move(atoms), std::move(decor), std::move(coeffs)};
}

ad::Tensor isotropic_aggregate(const LayerInput& input, const NeighborIndex& nbr, Aggregation mode,
                               const Perceptron& feature_map, const ad::Tensor& weight, const ad::Tensor& bias,
                               FeatureInput feature_mode) {
    if (mode == Aggregation::Anisotropic) throw std::invalid_argument("isotropic_aggregate: anisotropic is not a pooling mode");
    const ad::Tensor feats = neighbor_features(input, nbr, feature_map, feature_mode);
    const std::size_t n = feats.dim(0), k = feats.dim(1), cf = feats.dim(2);
    const std::size_t slots = mode == Aggregation::Unordered ? k : 1;
    if (weight.rank() != 3 || weight.dim(0) != slots || weight.dim(1) != cf) {
        throw ShapeError("isotropic_aggregate: weights " + ad::shape_str(weight.shape()) + " for mode " +
                         std::string(to_string(mode)) + " with K=" + std::to_string(k) + ", C_f=" + std::to_string(cf));
    }
    const std::size_t cout = weight.dim(2);
    ad::Tensor pooled;
    switch (mode) {
        case Aggregation::Max: pooled = ad::max(feats, 1); break;
        case Aggregation::Mean: pooled = ad::mean(feats, 1); break;
        case Aggregation::Sum: pooled = ad::sum(feats, 1); break;
        case Aggregation::Unordered: pooled = ad::reshape(feats, {n, k * cf}); break;
        case Aggregation::Anisotropic: break;
    }
    return ad::add(ad::matmul(pooled, ad::reshape(weight, {slots * cf, cout})), bias);
}

ad::Tensor initial_atoms(const ParamInit& init, std::size_t atoms, std::size_t dim) {
    ad::Tensor a = init.normal("dictionary.atoms", {atoms, dim}, 1.0);
    auto v = a.mutable_data();
    for (std::size_t m = 0; m < atoms; ++m) {
        double norm = 0.0;
        for (std::size_t j = 0; j < dim; ++j) norm += v[m * dim + j] * v[m * dim + j];
        norm = std::sqrt(norm);
        if (norm > 0.0)
            for (std::size_t j = 0; j < dim; ++j) v[m * dim + j] /= norm;
    }
    return a;
}

}  // namespace stpc
