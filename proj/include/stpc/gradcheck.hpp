#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stpc/tensor.hpp"

namespace stpc::ad {

struct GradcheckOptions {
    double step = 1e-6;       // central-difference half width
    double tolerance = 1e-4;  // max relative error per entry
    // Denominator floor: rel = |analytic - numeric| / max(|analytic|, |numeric|, floor).
    double floor = 1e-6;
    // 0 checks every entry; otherwise a seeded subset of this size per block.
    std::size_t max_entries_per_block = 0;
    std::uint64_t seed = 0;
};

struct BlockReport {
    std::string name;
    std::size_t entries_checked = 0;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    bool pass = true;
};

// Compares reverse-mode gradients of `loss_fn` against central finite differences,
// block by block. `loss_fn` must be deterministic and return a scalar.
std::vector<BlockReport> gradient_check(const std::function<Tensor()>& loss_fn, std::span<NamedTensor> params,
                                        const GradcheckOptions& options = {});

double relative_error(double analytic, double numeric, double floor);

}  // namespace stpc::ad
