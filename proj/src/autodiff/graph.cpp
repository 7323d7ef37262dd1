#include "deepcq/autodiff/graph.hpp"

#include <algorithm>
#include <cmath>

#include "deepcq/error.hpp"

namespace deepcq::ad {

namespace {

template <typename T>
bool needs_grad(const Var<T>& v) {
    return v && v->requires_grad;
}

void require(bool ok, const std::string& what) {
    if (!ok) throw ShapeError(what);
}

struct ConvGeom {
    std::size_t n, c, d, h, w;        // input
    std::size_t k, kd, kh, kw;        // kernel
    std::size_t od, oh, ow;           // output
    std::size_t stride, pad;
    std::size_t rows() const { return c * kd * kh * kw; }
    std::size_t cols() const { return od * oh * ow; }
    std::size_t in_sample() const { return c * d * h * w; }
};

// col[(c,kz,ky,kx), (oz,oy,ox)] = x[c, oz*s - p + kz, ...] or 0 outside.
template <typename T>
void im2col(const ConvGeom& g, const T* x, T* col) {
    const std::size_t P = g.cols();
    std::size_t r = 0;
    for (std::size_t c = 0; c < g.c; ++c)
        for (std::size_t kz = 0; kz < g.kd; ++kz)
            for (std::size_t ky = 0; ky < g.kh; ++ky)
                for (std::size_t kx = 0; kx < g.kw; ++kx, ++r) {
                    T* out = col + r * P;
                    for (std::size_t oz = 0; oz < g.od; ++oz) {
                        const long iz = static_cast<long>(oz * g.stride + kz) - static_cast<long>(g.pad);
                        for (std::size_t oy = 0; oy < g.oh; ++oy) {
                            const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                            T* o = out + (oz * g.oh + oy) * g.ow;
                            if (iz < 0 || iz >= static_cast<long>(g.d) || iy < 0 || iy >= static_cast<long>(g.h)) {
                                std::fill(o, o + g.ow, T(0));
                                continue;
                            }
                            const T* row = x + ((c * g.d + static_cast<std::size_t>(iz)) * g.h + static_cast<std::size_t>(iy)) * g.w;
                            for (std::size_t ox = 0; ox < g.ow; ++ox) {
                                const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                                o[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? T(0) : row[ix];
                            }
                        }
                    }
                }
}

template <typename T>
void col2im_add(const ConvGeom& g, const T* col, T* dx) {
    const std::size_t P = g.cols();
    std::size_t r = 0;
    for (std::size_t c = 0; c < g.c; ++c)
        for (std::size_t kz = 0; kz < g.kd; ++kz)
            for (std::size_t ky = 0; ky < g.kh; ++ky)
                for (std::size_t kx = 0; kx < g.kw; ++kx, ++r) {
                    const T* in = col + r * P;
                    for (std::size_t oz = 0; oz < g.od; ++oz) {
                        const long iz = static_cast<long>(oz * g.stride + kz) - static_cast<long>(g.pad);
                        if (iz < 0 || iz >= static_cast<long>(g.d)) continue;
                        for (std::size_t oy = 0; oy < g.oh; ++oy) {
                            const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                            if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
                            const T* o = in + (oz * g.oh + oy) * g.ow;
                            T* row = dx + ((c * g.d + static_cast<std::size_t>(iz)) * g.h + static_cast<std::size_t>(iy)) * g.w;
                            for (std::size_t ox = 0; ox < g.ow; ++ox) {
                                const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                                if (ix >= 0 && ix < static_cast<long>(g.w)) row[ix] += o[ox];
                            }
                        }
                    }
                }
}

}  // namespace

template <typename T>
Var<T> Graph<T>::record(Tensor<T> value, bool requires_grad) {
    auto v = make_var(std::move(value), requires_grad && grad_enabled_);
    if (v->requires_grad) tape_.push_back(v);
    return v;
}

template <typename T>
Var<T> Graph<T>::conv3d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::size_t stride, std::size_t padding) {
    const auto& xs = x->shape();
    const auto& ws = w->shape();
    require(xs.size() == 5 && ws.size() == 5 && xs[1] == ws[1] && stride >= 1,
            "conv3d: input " + shape_string(xs) + " incompatible with weight " + shape_string(ws));
    require(!b || (b->shape().size() == 1 && b->shape()[0] == ws[0]),
            "conv3d: bias " + (b ? shape_string(b->shape()) : std::string("[]")) + " does not match weight " +
                shape_string(ws));
    require(ws[2] <= xs[2] + 2 * padding && ws[3] <= xs[3] + 2 * padding && ws[4] <= xs[4] + 2 * padding,
            "conv3d: kernel " + shape_string(ws) + " larger than padded input " + shape_string(xs));
    ConvGeom g{xs[0], xs[1], xs[2], xs[3], xs[4], ws[0], ws[2], ws[3], ws[4], 0, 0, 0, stride, padding};
    g.od = (g.d + 2 * padding - g.kd) / stride + 1;
    g.oh = (g.h + 2 * padding - g.kh) / stride + 1;
    g.ow = (g.w + 2 * padding - g.kw) / stride + 1;

    const std::size_t R = g.rows(), P = g.cols();
    Tensor<T> out({g.n, g.k, g.od, g.oh, g.ow});
    std::vector<T> col(R * P);
    const T* wdata = w->value.data.data();
    for (std::size_t s = 0; s < g.n; ++s) {
        im2col(g, x->value.data.data() + s * g.in_sample(), col.data());
        T* o = out.data.data() + s * g.k * P;
        gemm<T>(false, false, g.k, P, R, wdata, col.data(), o, false);
        if (b)
            for (std::size_t k = 0; k < g.k; ++k) {
                const T bk = b->value.data[k];
                for (std::size_t p = 0; p < P; ++p) o[k * P + p] += bk;
            }
    }

    const bool rg = needs_grad(x) || needs_grad(w) || needs_grad(b);
    auto y = record(std::move(out), rg);
    if (y->requires_grad) {
        Node<T>* self = y.get();
        y->backward = [self, x, w, b, g]() {
            const std::size_t R = g.rows(), P = g.cols();
            std::vector<T> col(R * P), dcol;
            const T* gy = self->grad.data();
            if (needs_grad(b)) {
                auto db = b->grad_buffer();
                for (std::size_t s = 0; s < g.n; ++s)
                    for (std::size_t k = 0; k < g.k; ++k) {
                        T acc = 0;
                        const T* row = gy + (s * g.k + k) * P;
                        for (std::size_t p = 0; p < P; ++p) acc += row[p];
                        db[k] += acc;
                    }
            }
            if (needs_grad(w)) {
                auto dw = w->grad_buffer();
                for (std::size_t s = 0; s < g.n; ++s) {
                    im2col(g, x->value.data.data() + s * g.in_sample(), col.data());
                    gemm<T>(false, true, g.k, R, P, gy + s * g.k * P, col.data(), dw.data(), true);
                }
            }
            if (needs_grad(x)) {
                auto dx = x->grad_buffer();
                dcol.resize(R * P);
                for (std::size_t s = 0; s < g.n; ++s) {
                    gemm<T>(true, false, R, P, g.k, w->value.data.data(), gy + s * g.k * P, dcol.data(), false);
                    col2im_add(g, dcol.data(), dx.data() + s * g.in_sample());
                }
            }
        };
    }
    return y;
}

template <typename T>
Var<T> Graph<T>::linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
    const auto& xs = x->shape();
    const auto& ws = w->shape();
    require(xs.size() == 2 && ws.size() == 2 && xs[1] == ws[1],
            "linear: input " + shape_string(xs) + " incompatible with weight " + shape_string(ws));
    require(!b || (b->shape().size() == 1 && b->shape()[0] == ws[0]), "linear: bias does not match weight " +
                                                                          shape_string(ws));
    const std::size_t n = xs[0], in = xs[1], outf = ws[0];
    Tensor<T> out({n, outf});
    gemm<T>(false, true, n, outf, in, x->value.data.data(), w->value.data.data(), out.data.data(), false);
    if (b)
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t o = 0; o < outf; ++o) out.data[r * outf + o] += b->value.data[o];

    const bool rg = needs_grad(x) || needs_grad(w) || needs_grad(b);
    auto y = record(std::move(out), rg);
    if (y->requires_grad) {
        Node<T>* self = y.get();
        y->backward = [self, x, w, b, n, in, outf]() {
            const T* gy = self->grad.data();
            if (needs_grad(x)) gemm<T>(false, false, n, in, outf, gy, w->value.data.data(), x->grad_buffer().data(), true);
            if (needs_grad(w)) gemm<T>(true, false, outf, in, n, gy, x->value.data.data(), w->grad_buffer().data(), true);
            if (needs_grad(b)) {
                auto db = b->grad_buffer();
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t o = 0; o < outf; ++o) db[o] += gy[r * outf + o];
            }
        };
    }
    return y;
}

template <typename T>
Var<T> Graph<T>::relu(const Var<T>& x) {
    Tensor<T> out(x->shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = std::max(x->value.data[i], T(0));
    auto y = record(std::move(out), needs_grad(x));
    if (y->requires_grad) {
        Node<T>* self = y.get();
        y->backward = [self, x]() {
            auto dx = x->grad_buffer();
            for (std::size_t i = 0; i < dx.size(); ++i)
                if (x->value.data[i] > T(0)) dx[i] += self->grad[i];
        };
    }
    return y;
}

template <typename T>
Var<T> Graph<T>::softmax(const Var<T>& x) {
    const auto& xs = x->shape();
    require(xs.size() == 2, "softmax: expected a 2D tensor, got " + shape_string(xs));
    const std::size_t n = xs[0], m = xs[1];
    Tensor<T> out(xs);
    for (std::size_t r = 0; r < n; ++r) {
        const T* in = x->value.data.data() + r * m;
        T* o = out.data.data() + r * m;
        const T mx = *std::max_element(in, in + m);
        T sum = 0;
        for (std::size_t j = 0; j < m; ++j) sum += (o[j] = std::exp(in[j] - mx));
        for (std::size_t j = 0; j < m; ++j) o[j] /= sum;
    }
    auto y = record(std::move(out), needs_grad(x));
    if (y->requires_grad) {
        Node<T>* self = y.get();
        y->backward = [self, x, n, m]() {
            auto dx = x->grad_buffer();
            for (std::size_t r = 0; r < n; ++r) {
                const T* yv = self->value.data.data() + r * m;
                const T* gy = self->grad.data() + r * m;
                T dot = 0;
                for (std::size_t j = 0; j < m; ++j) dot += gy[j] * yv[j];
                for (std::size_t j = 0; j < m; ++j) dx[r * m + j] += yv[j] * (gy[j] - dot);
            }
        };
    }
    return y;
}

template <typename T>
Var<T> Graph<T>::global_avg_pool(const Var<T>& x) {
    const auto& xs = x->shape();
    require(xs.size() == 5, "global_avg_pool: expected [N,C,D,H,W], got " + shape_string(xs));
    const std::size_t n = xs[0], c = xs[1], vol = xs[2] * xs[3] * xs[4];
    Tensor<T> out({n, c});
    for (std::size_t i = 0; i < n * c; ++i) {
        const T* p = x->value.data.data() + i * vol;
        T acc = 0;
        for (std::size_t v = 0; v < vol; ++v) acc += p[v];
        out.data[i] = acc / static_cast<T>(vol);
    }
    auto y = record(std::move(out), needs_grad(x));
    if (y->requires_grad) {
        Node<T>* self = y.get();
        y->backward = [self, x, n, c, vol]() {
            auto dx = x->grad_buffer();
            for (std::size_t i = 0; i < n * c; ++i) {
                const T g = self->grad[i] / static_cast<T>(vol);
                for (std::size_t v = 0; v < vol; ++v) dx[i * vol + v] += g;
            }
        };
    }
    return y;
}

template <typename T>
Var<T> Graph<T>::concat(const std::vector<Var<T>>& parts) {
    require(!parts.empty(), "concat: no inputs");
    const std::size_t n = parts[0]->shape().at(0);
    std::size_t total = 0;
    bool rg = false;
    for (const auto& p : parts) {
        require(p->shape().size() == 2 && p->shape()[0] == n,
                "concat: part " + shape_string(p->shape()) + " does not have " + std::to_string(n) + " rows");
        total += p->shape()[1];
        rg = rg || needs_grad(p);
    }
    Tensor<T> out({n, total});
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t m = p->shape()[1];
        for (std::size_t r = 0; r < n; ++r)
            std::copy_n(p->value.data.data() + r * m, m, out.data.data() + r * total + off);
        off += m;
    }
    auto y = record(std::move(out), rg);
    if (y->requires_grad) {
        Node<T>* self = y.get();
        y->backward = [self, parts, n, total]() {
            std::size_t off = 0;
            for (const auto& p : parts) {
                const std::size_t m = p->shape()[1];
                if (needs_grad(p)) {
                    auto dp = p->grad_buffer();
                    for (std::size_t r = 0; r < n; ++r)
                        for (std::size_t j = 0; j < m; ++j) dp[r * m + j] += self->grad[r * total + off + j];
                }
                off += m;
            }
        };
    }
    return y;
}

template <typename T>
Var<T> Graph<T>::add(const Var<T>& a, const Var<T>& b) {
    require(a->shape() == b->shape(), "add: shape " + shape_string(a->shape()) + " vs " + shape_string(b->shape()));
    Tensor<T> out(a->shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = a->value.data[i] + b->value.data[i];
    auto y = record(std::move(out), needs_grad(a) || needs_grad(b));
    if (y->requires_grad) {
        Node<T>* self = y.get();
        y->backward = [self, a, b]() {
            for (const auto* v : {&a, &b})
                if (needs_grad(*v)) {
                    auto d = (*v)->grad_buffer();
                    for (std::size_t i = 0; i < d.size(); ++i) d[i] += self->grad[i];
                }
        };
    }
    return y;
}

template <typename T>
Var<T> Graph<T>::mul(const Var<T>& a, const Var<T>& b) {
    require(a->shape() == b->shape(), "mul: shape " + shape_string(a->shape()) + " vs " + shape_string(b->shape()));
    Tensor<T> out(a->shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = a->value.data[i] * b->value.data[i];
    auto y = record(std::move(out), needs_grad(a) || needs_grad(b));
    if (y->requires_grad) {
        Node<T>* self = y.get();
        y->backward = [self, a, b]() {
            if (needs_grad(a)) {
                auto d = a->grad_buffer();
                for (std::size_t i = 0; i < d.size(); ++i) d[i] += self->grad[i] * b->value.data[i];
            }
            if (needs_grad(b)) {
                auto d = b->grad_buffer();
                for (std::size_t i = 0; i < d.size(); ++i) d[i] += self->grad[i] * a->value.data[i];
            }
        };
    }
    return y;
}

template <typename T>
Var<T> Graph<T>::sum_last(const Var<T>& x) {
    const auto& xs = x->shape();
    require(xs.size() == 2, "sum_last: expected a 2D tensor, got " + shape_string(xs));
    const std::size_t n = xs[0], m = xs[1];
    Tensor<T> out({n, 1});
    for (std::size_t r = 0; r < n; ++r) {
        T acc = 0;
        for (std::size_t j = 0; j < m; ++j) acc += x->value.data[r * m + j];
        out.data[r] = acc;
    }
    auto y = record(std::move(out), needs_grad(x));
    if (y->requires_grad) {
        Node<T>* self = y.get();
        y->backward = [self, x, n, m]() {
            auto dx = x->grad_buffer();
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t j = 0; j < m; ++j) dx[r * m + j] += self->grad[r];
        };
    }
    return y;
}

template <typename T>
Var<T> Graph<T>::gather_rows(const Var<T>& x, std::span<const std::size_t> indices) {
    const auto& xs = x->shape();
    require(xs.size() == 2, "gather_rows: expected a 2D tensor, got " + shape_string(xs));
    const std::size_t m = xs[1];
    Tensor<T> out({indices.size(), m});
    for (std::size_t r = 0; r < indices.size(); ++r) {
        require(indices[r] < xs[0], "gather_rows: index " + std::to_string(indices[r]) + " out of range");
        std::copy_n(x->value.data.data() + indices[r] * m, m, out.data.data() + r * m);
    }
    auto y = record(std::move(out), needs_grad(x));
    if (y->requires_grad) {
        Node<T>* self = y.get();
        std::vector<std::size_t> idx(indices.begin(), indices.end());
        y->backward = [self, x, idx = std::move(idx), m]() {
            auto dx = x->grad_buffer();
            for (std::size_t r = 0; r < idx.size(); ++r)
                for (std::size_t j = 0; j < m; ++j) dx[idx[r] * m + j] += self->grad[r * m + j];
        };
    }
    return y;
}

template <typename T>
Var<T> Graph<T>::mse_loss(const Var<T>& pred, const Tensor<T>& target, const std::vector<T>& mask) {
    require(pred->shape() == target.shape,
            "mse_loss: prediction " + shape_string(pred->shape()) + " vs target " + shape_string(target.shape));
    require(mask.empty() || mask.size() == target.numel(), "mse_loss: mask size mismatch");
    const std::size_t n = target.numel();
    T denom = 0, acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const T m = mask.empty() ? T(1) : mask[i];
        const T d = pred->value.data[i] - target.data[i];
        acc += m * d * d;
        denom += m;
    }
    const T scale = denom > T(0) ? T(1) / denom : T(0);
    auto y = record(Tensor<T>({1}, std::vector<T>{acc * scale}), needs_grad(pred));
    if (y->requires_grad) {
        Node<T>* self = y.get();
        y->backward = [self, pred, target, mask, scale, n]() {
            auto dp = pred->grad_buffer();
            const T g = self->grad[0] * T(2) * scale;
            for (std::size_t i = 0; i < n; ++i) {
                const T m = mask.empty() ? T(1) : mask[i];
                dp[i] += g * m * (pred->value.data[i] - target.data[i]);
            }
        };
    }
    return y;
}

template <typename T>
Var<T> Graph<T>::rmse_loss(const Var<T>& pred, const Tensor<T>& target, const std::vector<T>& mask) {
    auto m = mse_loss(pred, target, mask);
    const T value = std::sqrt(m->value.data[0] + T(1e-12));
    auto y = record(Tensor<T>({1}, std::vector<T>{value}), m->requires_grad);
    if (y->requires_grad) {
        Node<T>* self = y.get();
        y->backward = [self, m, value]() { m->grad_buffer()[0] += self->grad[0] / (T(2) * value); };
    }
    return y;
}

template <typename T>
void Graph<T>::backward(const Var<T>& loss) {
    require(loss->value.numel() == 1, "backward: loss must be a scalar, got " + shape_string(loss->shape()));
    if (!loss->requires_grad) return;
    loss->grad_buffer()[0] += T(1);
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
        Node<T>& node = **it;
        if (!node.grad.empty() && node.backward) node.backward();
    }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace deepcq::ad
