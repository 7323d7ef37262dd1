#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "deepcq/autodiff/tensor.hpp"

namespace deepcq::ad {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. Parameters that are frozen or received no
/// gradient in the last backward pass are skipped.
template <typename T>
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    /// Throws TrainingError naming the first parameter with a non-finite gradient.
    void step(ParameterStore<T>& params, double lr);

    std::uint64_t step_count(const std::string& name) const;

private:
    struct Moments {
        std::vector<double> m, v;
        std::uint64_t t = 0;
    };
    AdamConfig cfg_;
    std::map<std::string, Moments> state_;
};

/// lr0 * 0.5^floor(3 * epoch / total_epochs): three halvings over a run.
double step_decay_lr(double lr0, int epoch, int total_epochs);

}  // namespace deepcq::ad
