#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "deepcq/autodiff/tensor.hpp"

namespace deepcq::ad {

/// Reverse-mode tape, rebuilt for every forward pass. Ops whose inputs do not
/// require gradients are evaluated eagerly and never recorded.
template <typename T>
class Graph {
public:
    /// With gradients disabled nothing is recorded (inference mode).
    explicit Graph(bool enable_grad = true) : grad_enabled_(enable_grad) {}

    Var<T> constant(Tensor<T> value) { return make_var(std::move(value), false); }

    /// x [N,C,D,H,W], w [K,C,kd,kh,kw], b [K] (may be null). Cross-correlation.
    Var<T> conv3d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::size_t stride, std::size_t padding);
    /// x [N,in], w [out,in], b [out] (may be null): x w^T + b.
    Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b);
    Var<T> relu(const Var<T>& x);
    /// Along the last axis of a 2D tensor.
    Var<T> softmax(const Var<T>& x);
    /// [N,C,D,H,W] -> [N,C].
    Var<T> global_avg_pool(const Var<T>& x);
    /// 2D tensors with equal rows, joined along axis 1.
    Var<T> concat(const std::vector<Var<T>>& parts);
    Var<T> add(const Var<T>& a, const Var<T>& b);
    Var<T> mul(const Var<T>& a, const Var<T>& b);
    /// [N,M] -> [N,1].
    Var<T> sum_last(const Var<T>& x);
    /// out[r] = x[indices[r]] for a 2D x.
    Var<T> gather_rows(const Var<T>& x, std::span<const std::size_t> indices);

    /// Mean of mask * (pred - target)^2 over mask entries (mask may be empty = all ones).
    Var<T> mse_loss(const Var<T>& pred, const Tensor<T>& target, const std::vector<T>& mask = {});
    /// sqrt(mse + 1e-12).
    Var<T> rmse_loss(const Var<T>& pred, const Tensor<T>& target, const std::vector<T>& mask = {});

    /// Seeds d(loss)/d(loss) = 1 and runs every recorded backward rule in reverse.
    void backward(const Var<T>& loss);

    std::size_t tape_size() const { return tape_.size(); }

private:
    Var<T> record(Tensor<T> value, bool requires_grad);

    bool grad_enabled_ = true;
    std::vector<Var<T>> tape_;
};

/// Row-major GEMM: C (MxN) = op(A) op(B) (+ C if accumulate).
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
          bool accumulate);

}  // namespace deepcq::ad
