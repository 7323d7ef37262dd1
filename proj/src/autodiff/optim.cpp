#include "deepcq/autodiff/optim.hpp"

#include <cmath>

#include "deepcq/error.hpp"

namespace deepcq::ad {

template <typename T>
void Adam<T>::step(ParameterStore<T>& params, double lr) {
    for (auto& p : params.all()) {
        if (!p.trainable || p.var->grad.empty()) continue;
        for (auto g : p.var->grad)
            if (!std::isfinite(static_cast<double>(g))) throw TrainingError("non-finite gradient in parameter '" + p.name + "'");
    }
    for (auto& p : params.all()) {
        if (!p.trainable || p.var->grad.empty()) continue;
        auto& st = state_[p.name];
        const std::size_t n = p.var->value.numel();
        if (st.m.empty()) {
            st.m.assign(n, 0.0);
            st.v.assign(n, 0.0);
        }
        ++st.t;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(st.t));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(st.t));
        auto& w = p.var->value.data;
        const auto& g = p.var->grad;
        for (std::size_t i = 0; i < n; ++i) {
            const double gi = g[i];
            st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * gi;
            st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * gi * gi;
            const double mhat = st.m[i] / c1, vhat = st.v[i] / c2;
            w[i] = static_cast<T>(static_cast<double>(w[i]) - lr * mhat / (std::sqrt(vhat) + cfg_.eps));
        }
    }
}

template <typename T>
std::uint64_t Adam<T>::step_count(const std::string& name) const {
    auto it = state_.find(name);
    return it == state_.end() ? 0 : it->second.t;
}

double step_decay_lr(double lr0, int epoch, int total_epochs) {
    if (total_epochs <= 0) return lr0;
    const int halvings = (3 * epoch) / total_epochs;
    return lr0 * std::ldexp(1.0, -halvings);
}

template class Adam<float>;
template class Adam<double>;

}  // namespace deepcq::ad
