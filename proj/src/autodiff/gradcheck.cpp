#include "deepcq/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "deepcq/rng.hpp"

namespace deepcq::ad {

GradCheckResult grad_check(const std::function<Var<double>(Graph<double>&)>& build,
                           const std::vector<GradCheckTarget>& targets, std::size_t max_coords_per_tensor,
                           std::uint64_t seed) {
    std::vector<bool> saved_flags;
    for (const auto& t : targets) {
        saved_flags.push_back(t.var->requires_grad);
        t.var->requires_grad = true;
        t.var->grad.clear();
    }
    {
        Graph<double> g;
        auto loss = build(g);
        g.backward(loss);
    }
    std::vector<std::vector<double>> analytic;
    for (const auto& t : targets) {
        auto grad = t.var->grad;
        if (grad.empty()) grad.assign(t.var->value.numel(), 0.0);
        analytic.push_back(std::move(grad));
    }

    auto eval = [&]() {
        Graph<double> g;
        return build(g)->value.data[0];
    };

    GradCheckResult result;
    Rng rng(seed);
    for (std::size_t ti = 0; ti < targets.size(); ++ti) {
        auto& data = targets[ti].var->value.data;
        std::vector<std::size_t> coords(data.size());
        std::iota(coords.begin(), coords.end(), 0);
        if (max_coords_per_tensor > 0 && coords.size() > max_coords_per_tensor) {
            rng.shuffle(coords.begin(), coords.end());
            coords.resize(max_coords_per_tensor);
            std::sort(coords.begin(), coords.end());
        }
        for (auto i : coords) {
            const double x0 = data[i];
            const double h = 1e-5 * std::max(1.0, std::fabs(x0));
            data[i] = x0 + h;
            const double fp = eval();
            data[i] = x0 - h;
            const double fm = eval();
            data[i] = x0;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[ti][i];
            const double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-6});
            ++result.coords_checked;
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst = targets[ti].name + "[" + std::to_string(i) + "]";
            }
        }
    }
    for (std::size_t ti = 0; ti < targets.size(); ++ti) {
        targets[ti].var->requires_grad = saved_flags[ti];
        targets[ti].var->grad.clear();
    }
    return result;
}

}  // namespace deepcq::ad
