#include <algorithm>

#include "deepcq/error.hpp"
#include "deepcq/surrogate.hpp"

namespace deepcq {

std::string HeadKey::name() const { return std::string(codec_name(codec)) + "." + std::string(metric_name(metric)); }

void SurrogateModel::set_head(const HeadKey& key, PredictionHead<float> head) {
    if (head.feature_dim() != backbone_.config().feature_dim)
        throw ShapeError("head '" + key.name() + "' expects " + std::to_string(head.feature_dim()) +
                         " features, backbone produces " + std::to_string(backbone_.config().feature_dim));
    heads_.insert_or_assign(key, std::move(head));
}

const PredictionHead<float>& SurrogateModel::head(const HeadKey& key) const {
    auto it = heads_.find(key);
    if (it == heads_.end()) throw MissingHeadError("model has no head for " + key.name());
    return it->second;
}

PredictionHead<float>& SurrogateModel::head(const HeadKey& key) {
    auto it = heads_.find(key);
    if (it == heads_.end()) throw MissingHeadError("model has no head for " + key.name());
    return it->second;
}

std::vector<HeadKey> SurrogateModel::head_keys() const {
    std::vector<HeadKey> out;
    for (const auto& [k, _] : heads_) out.push_back(k);
    return out;
}

std::vector<float> SurrogateModel::features(const Block& raw_block) const {
    return features(std::span<const Block>(&raw_block, 1));
}

std::vector<float> SurrogateModel::features(std::span<const Block> raw_blocks) const {
    const auto& bd = backbone_.config().block_dims;
    std::vector<float> input;
    input.reserve(raw_blocks.size() * bd.size());
    for (const auto& b : raw_blocks) {
        if (!(b.dims == bd))
            throw ShapeError("block dims " + to_string(b.dims) + " do not match backbone input " + to_string(bd));
        auto normalized = minmax_normalize(b).first;
        input.insert(input.end(), normalized.values.begin(), normalized.values.end());
    }
    return backbone_.extract_features(input, raw_blocks.size());
}

HeadPrediction SurrogateModel::predict(const HeadKey& key, std::span<const float> feature, double eb_rel) const {
    const std::size_t row = 0;
    return predict_batch(key, feature, std::span<const std::size_t>(&row, 1), std::span<const double>(&eb_rel, 1))
        .front();
}

std::vector<HeadPrediction> SurrogateModel::predict_batch(const HeadKey& key, std::span<const float> features,
                                                          std::span<const std::size_t> feature_rows,
                                                          std::span<const double> eb_rel) const {
    const auto& h = head(key);
    const std::size_t f = h.feature_dim();
    if (features.size() % f != 0) throw ShapeError("feature buffer is not a multiple of " + std::to_string(f));
    if (feature_rows.size() != eb_rel.size()) throw ShapeError("row and eb counts differ");
    const std::size_t nfeat = features.size() / f;
    const std::size_t n = feature_rows.size();
    if (n == 0) return {};

    // Embed each distinct bound once and expand by row.
    std::vector<double> ebs(eb_rel.begin(), eb_rel.end());
    std::sort(ebs.begin(), ebs.end());
    ebs.erase(std::unique(ebs.begin(), ebs.end()), ebs.end());
    ad::Tensor<float> u({ebs.size(), 1});
    for (std::size_t i = 0; i < ebs.size(); ++i) u.data[i] = static_cast<float>(normalize_eb(h.config().embedder, ebs[i]));
    std::vector<std::size_t> eb_index(n);
    ad::Tensor<float> x({n, f});
    for (std::size_t r = 0; r < n; ++r) {
        if (feature_rows[r] >= nfeat) throw ShapeError("feature row out of range");
        eb_index[r] = static_cast<std::size_t>(std::lower_bound(ebs.begin(), ebs.end(), eb_rel[r]) - ebs.begin());
        std::copy_n(features.begin() + static_cast<std::ptrdiff_t>(feature_rows[r] * f), f,
                    x.data.begin() + static_cast<std::ptrdiff_t>(r * f));
    }

    Graph<float> g(false);
    auto emb = g.gather_rows(h.embed(g, g.constant(std::move(u))), eb_index);
    auto out = h.predict(g, g.constant(std::move(x)), emb);
    std::vector<HeadPrediction> result(n);
    for (std::size_t r = 0; r < n; ++r) {
        auto& p = result[r];
        p.normalized = out.prediction->value.data[r];
        p.value = h.denormalize_target(p.normalized);
        if (out.weights) {
            const std::size_t e = out.weights->shape()[1];
            p.expert_weights.assign(out.weights->value.data.begin() + static_cast<std::ptrdiff_t>(r * e),
                                    out.weights->value.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * e));
        }
    }
    return result;
}

}  // namespace deepcq
