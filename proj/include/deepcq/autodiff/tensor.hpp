#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace deepcq::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_string(const Shape& s);

/// Dense row-major tensor. T is float for training and double for
/// gradient verification.
template <typename T>
struct Tensor {
    Shape shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(shape_numel(shape), fill) {}
    Tensor(Shape s, std::vector<T> values);

    std::size_t numel() const { return data.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }
};

/// A value on the tape. grad is allocated on first accumulation.
template <typename T>
struct Node {
    Tensor<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    std::function<void()> backward;

    std::span<T> grad_buffer() {
        if (grad.empty()) grad.assign(value.numel(), T(0));
        return grad;
    }
    const Shape& shape() const { return value.shape; }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
Var<T> make_var(Tensor<T> value, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

template <typename T>
struct Parameter {
    std::string name;
    Var<T> var;
    bool trainable = true;
};

/// Named, ordered parameter collection. Order is creation order and is the
/// serialization order.
template <typename T>
class ParameterStore {
public:
    Var<T> add(const std::string& name, Shape shape);
    const Parameter<T>& get(const std::string& name) const;
    Parameter<T>* find(const std::string& name);
    const Parameter<T>* find(const std::string& name) const;

    std::vector<Parameter<T>>& all() { return params_; }
    const std::vector<Parameter<T>>& all() const { return params_; }

    void zero_grad();
    /// Marks every parameter whose name starts with prefix.
    void set_trainable(const std::string& prefix, bool trainable);
    std::size_t total_size() const;
    /// FNV-1a over names, shapes and raw value bytes.
    std::uint64_t hash() const;

private:
    std::vector<Parameter<T>> params_;
};

}  // namespace deepcq::ad
