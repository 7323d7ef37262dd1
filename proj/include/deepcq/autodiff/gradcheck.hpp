#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "deepcq/autodiff/graph.hpp"

namespace deepcq::ad {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst;  // "<tensor>[<index>]"
    std::size_t coords_checked = 0;
};

struct GradCheckTarget {
    std::string name;
    Var<double> var;
};

/// Compares reverse-mode gradients of the scalar produced by `build` against
/// central differences, h = 1e-5 * max(1, |x|). Relative error is
/// |a - n| / max(|a|, |n|, 1e-6). With max_coords_per_tensor > 0, a seeded
/// subset of each larger tensor is probed.
GradCheckResult grad_check(const std::function<Var<double>(Graph<double>&)>& build,
                           const std::vector<GradCheckTarget>& targets, std::size_t max_coords_per_tensor = 0,
                           std::uint64_t seed = 0);

}  // namespace deepcq::ad
