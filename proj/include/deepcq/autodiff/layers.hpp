#pragma once

#include <cmath>
#include <string>

#include "deepcq/autodiff/graph.hpp"
#include "deepcq/rng.hpp"

namespace deepcq::ad {

// Weights and biases start uniform in +-1/sqrt(fan_in).
template <typename T>
void init_uniform(Tensor<T>& t, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
struct Linear {
    Var<T> weight, bias;
    std::size_t in = 0, out = 0;

    static Linear create(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
        Linear l;
        l.in = in;
        l.out = out;
        l.weight = store.add(name + ".weight", {out, in});
        l.bias = store.add(name + ".bias", {out});
        init_uniform(l.weight->value, in, rng);
        init_uniform(l.bias->value, in, rng);
        return l;
    }

    Var<T> operator()(Graph<T>& g, const Var<T>& x) const { return g.linear(x, weight, bias); }
};

template <typename T>
struct Conv3d {
    Var<T> weight, bias;
    std::size_t stride = 1, padding = 0;

    static Conv3d create(ParameterStore<T>& store, const std::string& name, std::size_t in_ch, std::size_t out_ch,
                         std::size_t kernel, std::size_t stride, std::size_t padding, Rng& rng) {
        Conv3d c;
        c.stride = stride;
        c.padding = padding;
        c.weight = store.add(name + ".weight", {out_ch, in_ch, kernel, kernel, kernel});
        c.bias = store.add(name + ".bias", {out_ch});
        const std::size_t fan_in = in_ch * kernel * kernel * kernel;
        init_uniform(c.weight->value, fan_in, rng);
        init_uniform(c.bias->value, fan_in, rng);
        return c;
    }

    Var<T> operator()(Graph<T>& g, const Var<T>& x) const { return g.conv3d(x, weight, bias, stride, padding); }
};

}  // namespace deepcq::ad
