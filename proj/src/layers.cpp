#include "stpc/layers.hpp"

#include <cmath>
#include <random>

#include "stpc/ops.hpp"

namespace stpc {

ad::Tensor Linear::operator()(const ad::Tensor& x) const { return ad::add(ad::matmul(x, weight), bias); }

void Linear::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
}

ad::Tensor Perceptron::operator()(const ad::Tensor& x) const {
    ad::Tensor y = output(ad::leaky_relu(hidden(x), slope));
    return activate_output ? ad::leaky_relu(y, slope) : y;
}

void Perceptron::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    hidden.collect(prefix + ".hidden", out);
    output.collect(prefix + ".output", out);
}

ad::Tensor Affine::operator()(const ad::Tensor& x) const { return ad::add(ad::mul(x, scale), shift); }

void Affine::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    out.push_back({prefix + ".scale", scale});
    out.push_back({prefix + ".shift", shift});
}

// splitmix64 finalizer
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t ParamInit::stream(std::string_view name) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char ch : name) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return mix_seed(seed_, h);
}

ad::Tensor ParamInit::normal(std::string_view name, ad::Shape shape, double stddev) const {
    std::mt19937_64 rng(stream(name));
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> values(ad::shape_numel(shape));
    for (double& v : values) v = dist(rng);
    return ad::Tensor(std::move(shape), std::move(values), true);
}

Linear ParamInit::linear(std::string_view name, std::size_t in, std::size_t out) const {
    const std::string base(name);
    return Linear{normal(base + ".weight", {in, out}, std::sqrt(2.0 / static_cast<double>(in))),
                  ad::Tensor::zeros({out}, true)};
}

Perceptron ParamInit::perceptron(std::string_view name, std::size_t in, std::size_t out, bool activate_output) const {
    const std::string base(name);
    Perceptron p{linear(base + ".hidden", in, out), linear(base + ".output", out, out)};
    p.activate_output = activate_output;
    return p;
}

Affine ParamInit::affine(std::size_t channels) const {
    return Affine{ad::Tensor::full({channels}, 1.0, true), ad::Tensor::zeros({channels}, true)};
}

}  // namespace stpc
