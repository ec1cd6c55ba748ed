#pragma once

#include <span>
#include <string>
#include <string_view>

#include "stpc/geometry.hpp"
#include "stpc/layers.hpp"
#include "stpc/tensor.hpp"

namespace stpc {

// What the feature perceptron sees for neighbor k of point i: its absolute
// coordinates p_k, or the offset p_k - p_i.
enum class FeatureInput { Absolute, Relative };

// Neighborhood aggregation used by an encoder stage.
//   Anisotropic: direction-dictionary encoding followed by per-atom convolution.
//   Max/Mean/Sum: isotropic pooling over neighbors, then one shared weight matrix.
//   Unordered: one weight matrix per neighbor slot in raw KNN order, summed.
enum class Aggregation { Anisotropic, Max, Mean, Sum, Unordered };

std::string_view to_string(Aggregation a);
std::string_view to_string(FeatureInput f);
// Throws std::invalid_argument naming the unknown value.
Aggregation parse_aggregation(std::string_view name);
FeatureInput parse_feature_input(std::string_view name);

struct StpcLayerParams {
    Perceptron spatial_map;  // 3 -> c
    Perceptron feature_map;  // 3 + C_in -> C_f
    Perceptron update_map;   // c -> c, advances the dictionary one layer
    ad::Tensor conv_weight;  // slots x C_f x C_out
    ad::Tensor conv_bias;    // C_out

    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct StpcOptions {
    double tau = 0.01;
    double eps = 1e-12;
    FeatureInput feature_input = FeatureInput::Absolute;
};

// Per-point inputs of one layer. `features` may be undefined when the cloud
// carries no attribute channels.
struct LayerInput {
    std::span<const Vec3> coords;
    ad::Tensor features;
};

struct EncodingCoefficients {
    ad::Tensor raw;    // [N, K, M] softmax over atoms, rows sum to 1
    ad::Tensor alpha;  // raw with entries below tau zeroed, not renormalized
    double tau = 0.01;
};

struct StpcOutput {
    ad::Tensor features;       // [N, C_out]
    ad::Tensor atoms;          // [M, c], this layer's dictionary
    ad::Tensor decorrelation;  // scalar
    EncodingCoefficients coefficients;
};

// A^l = F_a(A^{l-1}), applied atom-wise.
ad::Tensor update_dictionary(const ad::Tensor& atoms, const Perceptron& update_map);

// Sum of cosine similarities over ordered atom pairs p != q.
ad::Tensor decorrelation_loss(const ad::Tensor& atoms, double eps = 1e-12);

// [N, K, 3] offsets -> [N, K, c] direction features.
ad::Tensor spatial_direction_features(const ad::Tensor& offsets, const Perceptron& spatial_map);

// Softmax over atoms of cos(d_k, a_m), then tau-thresholded.
EncodingCoefficients encode_directions(const ad::Tensor& directions, const ad::Tensor& atoms, double tau,
                                       double eps = 1e-12);

// F_f applied to every neighbor, gathered as [N, K, C_f].
ad::Tensor neighbor_features(const LayerInput& input, const NeighborIndex& nbr, const Perceptron& feature_map,
                             FeatureInput mode = FeatureInput::Absolute);

// x~[i, m] = sum_k alpha[i, k, m] * f[i, k]; [N,K,M] x [N,K,C_f] -> [N,M,C_f].
ad::Tensor spatial_transform(const ad::Tensor& alpha, const ad::Tensor& neighbor_feats);
ad::Tensor spatial_transform(const EncodingCoefficients& coeffs, const LayerInput& input, const NeighborIndex& nbr,
                             const Perceptron& feature_map, FeatureInput mode = FeatureInput::Absolute);

// out[i] = sum_m x~[i, m] W_m + bias; weight is [M, C_f, C_out].
ad::Tensor anisotropic_conv(const ad::Tensor& x_tilde, const ad::Tensor& weight, const ad::Tensor& bias);

StpcOutput stpc_layer_forward(const LayerInput& input, const NeighborIndex& nbr, const StpcLayerParams& params,
                              const ad::Tensor& prev_atoms, const StpcOptions& options = {});

// Replaces encoding + spatial transform with symmetric pooling (or the unordered
// per-slot convolution). weight is [1, C_f, C_out], or [K, C_f, C_out] for Unordered.
ad::Tensor isotropic_aggregate(const LayerInput& input, const NeighborIndex& nbr, Aggregation mode,
                               const Perceptron& feature_map, const ad::Tensor& weight, const ad::Tensor& bias,
                               FeatureInput feature_mode = FeatureInput::Absolute);

// Unit-norm rows drawn from a standard normal.
ad::Tensor initial_atoms(const ParamInit& init, std::size_t atoms, std::size_t dim);

}  // namespace stpc
