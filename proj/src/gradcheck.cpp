#include "stpc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace stpc::ad {

double relative_error(double analytic, double numeric, double floor) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

std::vector<BlockReport> gradient_check(const std::function<Tensor()>& loss_fn, std::span<NamedTensor> params,
                                        const GradcheckOptions& options) {
    for (auto& p : params) p.tensor.zero_grad();
    Tape::current().clear();
    backward(loss_fn());

    std::mt19937_64 rng(options.seed);
    std::vector<BlockReport> reports;
    for (auto& p : params) {
        Tensor& t = p.tensor;
        const std::vector<double> analytic(t.grad().begin(), t.grad().end());
        std::vector<std::size_t> entries(t.numel());
        std::iota(entries.begin(), entries.end(), std::size_t{0});
        if (options.max_entries_per_block && entries.size() > options.max_entries_per_block) {
            std::shuffle(entries.begin(), entries.end(), rng);
            entries.resize(options.max_entries_per_block);
            std::sort(entries.begin(), entries.end());
        }

        BlockReport report{p.name};
        auto values = t.mutable_data();
        for (std::size_t j : entries) {
            const double saved = values[j];
            double plus = 0.0, minus = 0.0;
            {
                NoGradGuard guard;
                values[j] = saved + options.step;
                plus = loss_fn().item();
                values[j] = saved - options.step;
                minus = loss_fn().item();
                values[j] = saved;
            }
            const double numeric = (plus - minus) / (2.0 * options.step);
            const double a = analytic.empty() ? 0.0 : analytic[j];
            report.max_rel_error = std::max(report.max_rel_error, relative_error(a, numeric, options.floor));
            report.max_abs_error = std::max(report.max_abs_error, std::abs(a - numeric));
            ++report.entries_checked;
        }
        report.pass = report.max_rel_error < options.tolerance;
        reports.push_back(std::move(report));
    }
    return reports;
}

}  // namespace stpc::ad
