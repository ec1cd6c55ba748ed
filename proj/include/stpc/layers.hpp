#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "stpc/tensor.hpp"

namespace stpc {

using ad::NamedTensor;

// y = x W + b for x of shape [rows, in]; W is [in, out].
struct Linear {
    ad::Tensor weight;
    ad::Tensor bias;

    std::size_t in_features() const { return weight.dim(0); }
    std::size_t out_features() const { return weight.dim(1); }
    ad::Tensor operator()(const ad::Tensor& x) const;
    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

// Shared perceptron with one hidden layer of the output width:
// out = W2 lrelu(W1 x + b1) + b2, optionally followed by another lrelu.
struct Perceptron {
    Linear hidden;
    Linear output;
    double slope = 0.2;
    bool activate_output = false;

    std::size_t in_features() const { return hidden.in_features(); }
    std::size_t out_features() const { return output.out_features(); }
    ad::Tensor operator()(const ad::Tensor& x) const;
    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

// Per-channel y = x * scale + shift.
struct Affine {
    ad::Tensor scale;
    ad::Tensor shift;

    ad::Tensor operator()(const ad::Tensor& x) const;
    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

// Seeded parameter factory. Each block draws from its own stream keyed by
// (seed, name), so adding or removing one block leaves the others unchanged.
class ParamInit {
public:
    explicit ParamInit(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t stream(std::string_view name) const;
    // He-normal weights, zero bias.
    Linear linear(std::string_view name, std::size_t in, std::size_t out) const;
    Perceptron perceptron(std::string_view name, std::size_t in, std::size_t out, bool activate_output) const;
    Affine affine(std::size_t channels) const;
    ad::Tensor normal(std::string_view name, ad::Shape shape, double stddev) const;

private:
    std::uint64_t seed_;
};

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace stpc
