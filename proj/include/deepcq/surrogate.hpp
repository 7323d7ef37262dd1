#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "deepcq/autodiff/graph.hpp"
#include "deepcq/autodiff/layers.hpp"
#include "deepcq/codec.hpp"
#include "deepcq/field.hpp"
#include "deepcq/quality.hpp"

namespace deepcq {

using ad::Graph;
using ad::Tensor;
using ad::Var;

struct BackboneConfig {
    struct Stage {
        std::size_t blocks = 2;
        std::size_t channels = 16;
    };
    std::size_t stem_channels = 16;
    std::vector<Stage> stages{{2, 16}, {2, 32}};
    std::size_t feature_dim = 64;
    Dims3 block_dims{16, 16, 16};

    void validate() const;
};

struct EbEmbedderConfig {
    std::vector<std::size_t> hidden{128, 256};
    double log_lo = -5.0;  // log10 of the smallest bound seen in training
    double log_hi = -1.0;
    std::size_t embedding_dim = 256;

    void validate() const;
};

enum class HeadKind { PlainMlp, Moe };
enum class TargetTransform { Identity, Log2 };
std::string_view head_kind_name(HeadKind k);  // "mlp" / "moe"
HeadKind parse_head_kind(std::string_view name);

struct TargetNorm {
    double tmin = 0.0;
    double tmax = 1.0;
};

struct HeadConfig {
    HeadKind kind = HeadKind::Moe;
    std::size_t n_experts = 4;
    std::size_t expert_hidden = 64;
    std::size_t mlp_hidden = 64;
    Metric metric = Metric::CR;
    TargetTransform transform = TargetTransform::Identity;
    std::optional<TargetNorm> norm;
    EbEmbedderConfig embedder;

    void validate() const;
};

/// log2 transform for CR heads, identity otherwise.
HeadConfig default_head_config(Metric metric, HeadKind kind = HeadKind::Moe);

/// clamp((log10(eb) - lo) / (hi - lo), 0, 1). Throws ArgumentError for eb <= 0.
double normalize_eb(const EbEmbedderConfig& cfg, double eb_rel);

/// Residual 3D CNN: stem conv, residual stages (the first block of each stage
/// downsamples with stride 2), global average pooling, linear projection.
template <typename T>
class Backbone {
public:
    Backbone(const BackboneConfig& cfg, std::uint64_t seed);
    Backbone(Backbone&&) noexcept = default;
    Backbone& operator=(Backbone&&) noexcept = default;
    Backbone(const Backbone&) = delete;
    Backbone& operator=(const Backbone&) = delete;

    Backbone clone() const;

    /// x [N,1,bz,by,bx] -> [N,F].
    Var<T> forward(Graph<T>& g, const Var<T>& x) const;

    /// Inference on already-normalized blocks, concatenated; returns [N,F] row-major.
    std::vector<T> extract_features(std::span<const float> normalized_blocks, std::size_t count,
                                    std::size_t batch = 16) const;

    const BackboneConfig& config() const { return cfg_; }
    ad::ParameterStore<T>& params() { return params_; }
    const ad::ParameterStore<T>& params() const { return params_; }

private:
    struct ResBlock {
        ad::Conv3d<T> conv1, conv2;
        std::optional<ad::Conv3d<T>> proj;
    };
    BackboneConfig cfg_;
    ad::ParameterStore<T> params_;
    ad::Conv3d<T> stem_;
    std::vector<ResBlock> blocks_;
    ad::Linear<T> fc_;
};

/// Error-bound embedding MLP (EFE-NN).
template <typename T>
class EbEmbedder {
public:
    EbEmbedder() = default;
    EbEmbedder(ad::ParameterStore<T>& store, const std::string& prefix, const EbEmbedderConfig& cfg, Rng& rng);
    /// u [N,1] -> [N,E].
    Var<T> forward(Graph<T>& g, const Var<T>& u) const;

private:
    std::vector<ad::Linear<T>> layers_;
};

/// Per-(codec, metric) head: EFE-NN plus Pred-NN (plain MLP or soft-gated MoE)
/// over concat(feature, embedding).
template <typename T>
class PredictionHead {
public:
    struct Output {
        Var<T> prediction;  // [N,1], normalized target space
        Var<T> weights;     // [N,n_experts]; null for plain heads
    };

    PredictionHead(const HeadConfig& cfg, std::size_t feature_dim, const std::string& prefix, std::uint64_t seed);
    PredictionHead(PredictionHead&&) noexcept = default;
    PredictionHead& operator=(PredictionHead&&) noexcept = default;
    PredictionHead(const PredictionHead&) = delete;
    PredictionHead& operator=(const PredictionHead&) = delete;

    PredictionHead clone() const;

    Var<T> embed(Graph<T>& g, const Var<T>& u) const;
    Output predict(Graph<T>& g, const Var<T>& features, const Var<T>& embedding) const;
    /// Convenience: u [N,1] straight to the prediction.
    Output forward(Graph<T>& g, const Var<T>& features, const Var<T>& u) const {
        return predict(g, features, embed(g, u));
    }

    /// Fits target_norm from raw metric values (after the head's transform).
    void fit_target_norm(std::span<const double> raw_targets);
    double normalize_target(double raw) const;
    /// normalized -> metric value: undo min-max, then 2^y for log2 heads, clamp to [0,1] for SSIM.
    double denormalize_target(double normalized) const;

    const HeadConfig& config() const { return cfg_; }
    HeadConfig& config() { return cfg_; }
    std::size_t feature_dim() const { return feature_dim_; }
    const std::string& prefix() const { return prefix_; }
    ad::ParameterStore<T>& params() { return params_; }
    const ad::ParameterStore<T>& params() const { return params_; }

private:
    struct Mlp {
        ad::Linear<T> hidden, out;
    };
    HeadConfig cfg_;
    std::size_t feature_dim_ = 0;
    std::string prefix_;
    std::uint64_t seed_ = 0;
    ad::ParameterStore<T> params_;
    EbEmbedder<T> embedder_;
    std::optional<ad::Linear<T>> router_;
    std::vector<Mlp> experts_;  // one entry for plain heads
};

struct HeadKey {
    CodecId codec = CodecId::PredEb;
    Metric metric = Metric::CR;

    auto operator<=>(const HeadKey&) const = default;
    std::string name() const;  // "pred-eb.cr"
};

struct HeadPrediction {
    double value = 0.0;       // metric units
    double normalized = 0.0;  // raw head output
    std::vector<double> expert_weights;
};

/// Backbone plus any number of heads; the unit of serialization.
class SurrogateModel {
public:
    static constexpr std::uint32_t kFormatVersion = 1;

    explicit SurrogateModel(Backbone<float> backbone) : backbone_(std::move(backbone)) {}

    Backbone<float>& backbone() { return backbone_; }
    const Backbone<float>& backbone() const { return backbone_; }

    void set_head(const HeadKey& key, PredictionHead<float> head);
    bool has_head(const HeadKey& key) const { return heads_.count(key) > 0; }
    /// Throws MissingHeadError.
    const PredictionHead<float>& head(const HeadKey& key) const;
    PredictionHead<float>& head(const HeadKey& key);
    std::vector<HeadKey> head_keys() const;

    /// Min-max normalizes a raw block and runs the backbone.
    std::vector<float> features(const Block& raw_block) const;
    /// Features for many raw blocks, [N,F] row-major.
    std::vector<float> features(std::span<const Block> raw_blocks) const;

    HeadPrediction predict(const HeadKey& key, std::span<const float> feature, double eb_rel) const;
    /// Row r uses features[feature_rows[r]] and eb_rel[r].
    std::vector<HeadPrediction> predict_batch(const HeadKey& key, std::span<const float> features,
                                              std::span<const std::size_t> feature_rows,
                                              std::span<const double> eb_rel) const;

    std::uint64_t training_seed = 0;
    std::uint64_t backbone_hash() const { return backbone_.params().hash(); }

private:
    Backbone<float> backbone_;
    std::map<HeadKey, PredictionHead<float>> heads_;
};

// Model file: "DCQM" | u32 version | u64 metadata length | metadata JSON |
// f32 LE parameter blobs in the order the metadata lists them.
std::vector<std::uint8_t> serialize_model(const SurrogateModel& model);
SurrogateModel deserialize_model(std::span<const std::uint8_t> bytes);
void save_model(const SurrogateModel& model, const std::filesystem::path& path);
SurrogateModel load_model(const std::filesystem::path& path);
/// Metadata JSON of a model file without loading parameters.
std::string read_model_metadata(const std::filesystem::path& path);

}  // namespace deepcq
