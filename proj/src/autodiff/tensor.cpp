#include "deepcq/autodiff/tensor.hpp"

#include "deepcq/error.hpp"
#include "deepcq/rng.hpp"

namespace deepcq::ad {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

std::string shape_string(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

template <typename T>
Tensor<T>::Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != shape_numel(shape))
        throw ShapeError("tensor shape " + shape_string(shape) + " needs " + std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(data.size()));
}

template <typename T>
Var<T> ParameterStore<T>::add(const std::string& name, Shape shape) {
    if (find(name)) throw ArgumentError("duplicate parameter name '" + name + "'");
    auto v = make_var(Tensor<T>(std::move(shape)), true);
    params_.push_back({name, v, true});
    return v;
}

template <typename T>
Parameter<T>* ParameterStore<T>::find(const std::string& name) {
    for (auto& p : params_)
        if (p.name == name) return &p;
    return nullptr;
}

template <typename T>
const Parameter<T>* ParameterStore<T>::find(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return &p;
    return nullptr;
}

template <typename T>
const Parameter<T>& ParameterStore<T>::get(const std::string& name) const {
    if (const auto* p = find(name)) return *p;
    throw IntegrityError("missing parameter '" + name + "'");
}

template <typename T>
void ParameterStore<T>::zero_grad() {
    for (auto& p : params_) p.var->grad.clear();
}

template <typename T>
void ParameterStore<T>::set_trainable(const std::string& prefix, bool trainable) {
    for (auto& p : params_)
        if (p.name.starts_with(prefix)) {
            p.trainable = trainable;
            p.var->requires_grad = trainable;
        }
}

template <typename T>
std::size_t ParameterStore<T>::total_size() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.var->value.numel();
    return n;
}

template <typename T>
std::uint64_t ParameterStore<T>::hash() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const auto& p : params_) {
        h = fnv1a64(p.name, h);
        for (auto d : p.var->value.shape) h = fnv1a64_bytes(&d, sizeof d, h);
        h = fnv1a64_bytes(p.var->value.data.data(), p.var->value.data.size() * sizeof(T), h);
    }
    return h;
}

template struct Tensor<float>;
template struct Tensor<double>;
template class ParameterStore<float>;
template class ParameterStore<double>;

}  // namespace deepcq::ad
