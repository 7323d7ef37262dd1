#include <algorithm>

#include "deepcq/error.hpp"
#include "deepcq/surrogate.hpp"

namespace deepcq {

void BackboneConfig::validate() const {
    if (feature_dim == 0) throw ArgumentError("feature_dim must be positive");
    if (stem_channels == 0) throw ArgumentError("stem_channels must be positive");
    if (stages.empty()) throw ArgumentError("backbone needs at least one stage");
    for (const auto& s : stages)
        if (s.blocks == 0 || s.channels == 0) throw ArgumentError("stage blocks and channels must be positive");
    if (block_dims.size() == 0) throw ArgumentError("block dims must be positive");
}

template <typename T>
Backbone<T>::Backbone(const BackboneConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(seed, "backbone.init"));
    stem_ = ad::Conv3d<T>::create(params_, "backbone.stem", 1, cfg_.stem_channels, 3, 1, 1, rng);
    std::size_t ch = cfg_.stem_channels;
    for (std::size_t s = 0; s < cfg_.stages.size(); ++s) {
        const auto& stage = cfg_.stages[s];
        for (std::size_t b = 0; b < stage.blocks; ++b) {
            const std::string name = "backbone.stage" + std::to_string(s) + ".block" + std::to_string(b);
            const std::size_t stride = b == 0 ? 2 : 1;
            ResBlock rb;
            rb.conv1 = ad::Conv3d<T>::create(params_, name + ".conv1", ch, stage.channels, 3, stride, 1, rng);
            rb.conv2 = ad::Conv3d<T>::create(params_, name + ".conv2", stage.channels, stage.channels, 3, 1, 1, rng);
            if (stride != 1 || ch != stage.channels)
                rb.proj = ad::Conv3d<T>::create(params_, name + ".proj", ch, stage.channels, 1, stride, 0, rng);
            blocks_.push_back(std::move(rb));
            ch = stage.channels;
        }
    }
    fc_ = ad::Linear<T>::create(params_, "backbone.fc", ch, cfg_.feature_dim, rng);
}

template <typename T>
Backbone<T> Backbone<T>::clone() const {
    Backbone out(cfg_, 0);
    auto& dst = out.params_.all();
    const auto& src = params_.all();
    for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i].var->value = src[i].var->value;
        dst[i].trainable = src[i].trainable;
        dst[i].var->requires_grad = src[i].var->requires_grad;
    }
    return out;
}

template <typename T>
Var<T> Backbone<T>::forward(Graph<T>& g, const Var<T>& x) const {
    const auto& s = x->shape();
    const auto& d = cfg_.block_dims;
    if (s.size() != 5 || s[1] != 1 || s[2] != d.nz || s[3] != d.ny || s[4] != d.nx)
        throw ShapeError("backbone expects [N,1," + std::to_string(d.nz) + "," + std::to_string(d.ny) + "," +
                         std::to_string(d.nx) + "], got " + ad::shape_string(s));
    auto h = g.relu(stem_(g, x));
    for (const auto& rb : blocks_) {
        auto y = rb.conv2(g, g.relu(rb.conv1(g, h)));
        auto skip = rb.proj ? (*rb.proj)(g, h) : h;
        h = g.relu(g.add(y, skip));
    }
    return fc_(g, g.global_avg_pool(h));
}

template <typename T>
std::vector<T> Backbone<T>::extract_features(std::span<const float> normalized_blocks, std::size_t count,
                                             std::size_t batch) const {
    const std::size_t bs = cfg_.block_dims.size();
    if (normalized_blocks.size() != count * bs)
        throw ShapeError("expected " + std::to_string(count) + " blocks of " + to_string(cfg_.block_dims));
    batch = std::max<std::size_t>(batch, 1);
    const std::size_t f = cfg_.feature_dim;
    std::vector<T> out(count * f);
    const auto& d = cfg_.block_dims;
    for (std::size_t start = 0; start < count; start += batch) {
        const std::size_t n = std::min(batch, count - start);
        ad::Tensor<T> x({n, 1, d.nz, d.ny, d.nx});
        std::transform(normalized_blocks.begin() + static_cast<std::ptrdiff_t>(start * bs),
                       normalized_blocks.begin() + static_cast<std::ptrdiff_t>((start + n) * bs), x.data.begin(),
                       [](float v) { return static_cast<T>(v); });
        Graph<T> g(false);
        auto y = forward(g, g.constant(std::move(x)));
        std::copy(y->value.data.begin(), y->value.data.end(), out.begin() + static_cast<std::ptrdiff_t>(start * f));
    }
    return out;
}

template class Backbone<float>;
template class Backbone<double>;

}  // namespace deepcq
