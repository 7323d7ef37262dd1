#include <algorithm>
#include <cmath>

#include "deepcq/error.hpp"
#include "deepcq/surrogate.hpp"

namespace deepcq {

std::string_view head_kind_name(HeadKind k) { return k == HeadKind::Moe ? "moe" : "mlp"; }

HeadKind parse_head_kind(std::string_view name) {
    if (name == "moe") return HeadKind::Moe;
    if (name == "mlp" || name == "plain_mlp") return HeadKind::PlainMlp;
    throw ArgumentError("unknown head kind '" + std::string(name) + "'");
}

void EbEmbedderConfig::validate() const {
    if (!(log_lo < log_hi)) throw ArgumentError("eb log range needs lo < hi");
    if (embedding_dim == 0) throw ArgumentError("embedding_dim must be positive");
    for (auto h : hidden)
        if (h == 0) throw ArgumentError("embedder hidden sizes must be positive");
}

void HeadConfig::validate() const {
    embedder.validate();
    if (n_experts == 0) throw ArgumentError("n_experts must be at least 1");
    if (expert_hidden == 0 || mlp_hidden == 0) throw ArgumentError("hidden sizes must be positive");
    if (norm && !(norm->tmin < norm->tmax)) throw ArgumentError("target norm needs tmin < tmax");
}

HeadConfig default_head_config(Metric metric, HeadKind kind) {
    HeadConfig c;
    c.kind = kind;
    c.metric = metric;
    c.transform = metric == Metric::CR ? TargetTransform::Log2 : TargetTransform::Identity;
    return c;
}

double normalize_eb(const EbEmbedderConfig& cfg, double eb_rel) {
    if (!(eb_rel > 0.0) || !std::isfinite(eb_rel)) throw ArgumentError("error bound must be positive");
    const double u = (std::log10(eb_rel) - cfg.log_lo) / (cfg.log_hi - cfg.log_lo);
    return std::clamp(u, 0.0, 1.0);
}

template <typename T>
EbEmbedder<T>::EbEmbedder(ad::ParameterStore<T>& store, const std::string& prefix, const EbEmbedderConfig& cfg,
                          Rng& rng) {
    std::size_t in = 1;
    for (std::size_t i = 0; i <= cfg.hidden.size(); ++i) {
        const std::size_t out = i < cfg.hidden.size() ? cfg.hidden[i] : cfg.embedding_dim;
        layers_.push_back(ad::Linear<T>::create(store, prefix + ".fc" + std::to_string(i), in, out, rng));
        in = out;
    }
}

template <typename T>
Var<T> EbEmbedder<T>::forward(Graph<T>& g, const Var<T>& u) const {
    auto h = u;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        h = layers_[i](g, h);
        if (i + 1 < layers_.size()) h = g.relu(h);
    }
    return h;
}

template <typename T>
PredictionHead<T>::PredictionHead(const HeadConfig& cfg, std::size_t feature_dim, const std::string& prefix,
                                  std::uint64_t seed)
    : cfg_(cfg), feature_dim_(feature_dim), prefix_(prefix), seed_(seed) {
    cfg_.validate();
    if (feature_dim == 0) throw ArgumentError("feature_dim must be positive");
    Rng rng(derive_seed(seed, "head.init", fnv1a64(prefix)));
    embedder_ = EbEmbedder<T>(params_, prefix + ".efe", cfg_.embedder, rng);
    const std::size_t fused = feature_dim + cfg_.embedder.embedding_dim;
    if (cfg_.kind == HeadKind::Moe) {
        router_ = ad::Linear<T>::create(params_, prefix + ".router", fused, cfg_.n_experts, rng);
        for (std::size_t e = 0; e < cfg_.n_experts; ++e) {
            const std::string name = prefix + ".expert" + std::to_string(e);
            Mlp m;
            m.hidden = ad::Linear<T>::create(params_, name + ".fc0", fused, cfg_.expert_hidden, rng);
            m.out = ad::Linear<T>::create(params_, name + ".fc1", cfg_.expert_hidden, 1, rng);
            experts_.push_back(std::move(m));
        }
    } else {
        Mlp m;
        m.hidden = ad::Linear<T>::create(params_, prefix + ".pred.fc0", fused, cfg_.mlp_hidden, rng);
        m.out = ad::Linear<T>::create(params_, prefix + ".pred.fc1", cfg_.mlp_hidden, 1, rng);
        experts_.push_back(std::move(m));
    }
}

template <typename T>
PredictionHead<T> PredictionHead<T>::clone() const {
    PredictionHead out(cfg_, feature_dim_, prefix_, seed_);
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
Var<T> PredictionHead<T>::embed(Graph<T>& g, const Var<T>& u) const {
    if (u->shape().size() != 2 || u->shape()[1] != 1)
        throw ShapeError("eb input must be [N,1], got " + ad::shape_string(u->shape()));
    return embedder_.forward(g, u);
}

template <typename T>
typename PredictionHead<T>::Output PredictionHead<T>::predict(Graph<T>& g, const Var<T>& features,
                                                              const Var<T>& embedding) const {
    const auto& fs = features->shape();
    const auto& es = embedding->shape();
    if (fs.size() != 2 || fs[1] != feature_dim_)
        throw ShapeError("head expects features [N," + std::to_string(feature_dim_) + "], got " +
                         ad::shape_string(fs));
    if (es.size() != 2 || es[1] != cfg_.embedder.embedding_dim || es[0] != fs[0])
        throw ShapeError("embedding shape " + ad::shape_string(es) + " does not match features " +
                         ad::shape_string(fs));
    auto fused = g.concat({features, embedding});
    auto run = [&](const Mlp& m) { return m.out(g, g.relu(m.hidden(g, fused))); };
    if (!router_) return {run(experts_.front()), nullptr};
    auto weights = g.softmax((*router_)(g, fused));
    std::vector<Var<T>> outs;
    outs.reserve(experts_.size());
    for (const auto& m : experts_) outs.push_back(run(m));
    auto combined = g.sum_last(g.mul(weights, g.concat(outs)));
    return {combined, weights};
}

template <typename T>
void PredictionHead<T>::fit_target_norm(std::span<const double> raw_targets) {
    if (raw_targets.empty()) throw DataError("no targets to fit the normalization on");
    double lo = INFINITY, hi = -INFINITY;
    for (double r : raw_targets) {
        if (!std::isfinite(r)) throw DataError("non-finite training target");
        if (cfg_.transform == TargetTransform::Log2 && !(r > 0.0)) throw DataError("log2 target must be positive");
        const double t = cfg_.transform == TargetTransform::Log2 ? std::log2(r) : r;
        lo = std::min(lo, t);
        hi = std::max(hi, t);
    }
    if (lo == hi) {
        lo -= 0.5;
        hi += 0.5;
    }
    cfg_.norm = TargetNorm{lo, hi};
}

template <typename T>
double PredictionHead<T>::normalize_target(double raw) const {
    if (!cfg_.norm) throw StateError("head '" + prefix_ + "' has no fitted target normalization");
    const double t = cfg_.transform == TargetTransform::Log2 ? std::log2(raw) : raw;
    return (t - cfg_.norm->tmin) / (cfg_.norm->tmax - cfg_.norm->tmin);
}

template <typename T>
double PredictionHead<T>::denormalize_target(double normalized) const {
    if (!cfg_.norm) throw StateError("head '" + prefix_ + "' has no fitted target normalization");
    double y = normalized * (cfg_.norm->tmax - cfg_.norm->tmin) + cfg_.norm->tmin;
    if (cfg_.transform == TargetTransform::Log2) y = std::exp2(y);
    if (cfg_.metric == Metric::SSIM) y = std::clamp(y, 0.0, 1.0);
    return y;
}

template class EbEmbedder<float>;
template class EbEmbedder<double>;
template class PredictionHead<float>;
template class PredictionHead<double>;

}  // namespace deepcq
