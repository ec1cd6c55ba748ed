#include "stpc/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "stpc/error.hpp"

namespace stpc::ad {

void adam_step(std::span<Tensor> params, AdamState& state, double lr) {
    if (!(lr > 0.0)) throw std::invalid_argument("adam_step: lr must be positive");
    if (state.first_moment.empty()) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.numel(), 0.0);
            state.second_moment.emplace_back(p.numel(), 0.0);
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw ShapeError("adam_step: state tracks " + std::to_string(state.first_moment.size()) +
                         " parameters, got " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (state.first_moment[i].size() != params[i].numel()) {
            throw ShapeError("adam_step: moment buffer " + std::to_string(i) + " does not match parameter shape " +
                             shape_str(params[i].shape()));
        }
    }

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        if (!p.has_grad()) continue;
        auto w = p.mutable_data();
        const auto g = p.grad();
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            const double mhat = m[j] / c1;
            const double vhat = v[j] / c2;
            w[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

void zero_grads(std::span<Tensor> params) {
    for (auto& p : params) p.zero_grad();
}

}  // namespace stpc::ad
