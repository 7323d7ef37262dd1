#include <bit>
#include <cstring>
#include <fstream>

#include "deepcq/error.hpp"
#include "deepcq/surrogate.hpp"
#include "json.hpp"

namespace deepcq {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'D', 'C', 'Q', 'M'};

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename U>
U get_le(std::span<const std::uint8_t> bytes, std::size_t pos) {
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[pos + i]) << (8 * i);
    return v;
}

json backbone_json(const BackboneConfig& c) {
    json stages = json::array();
    for (const auto& s : c.stages) stages.push_back({{"blocks", s.blocks}, {"channels", s.channels}});
    return {{"stem_channels", c.stem_channels},
            {"stages", stages},
            {"feature_dim", c.feature_dim},
            {"block_dims", {c.block_dims.nx, c.block_dims.ny, c.block_dims.nz}}};
}

BackboneConfig backbone_from_json(const json& j) {
    BackboneConfig c;
    c.stem_channels = j.at("stem_channels").get<std::size_t>();
    c.stages.clear();
    for (const auto& s : j.at("stages"))
        c.stages.push_back({s.at("blocks").get<std::size_t>(), s.at("channels").get<std::size_t>()});
    c.feature_dim = j.at("feature_dim").get<std::size_t>();
    const auto& d = j.at("block_dims");
    c.block_dims = {d.at(0).get<std::size_t>(), d.at(1).get<std::size_t>(), d.at(2).get<std::size_t>()};
    return c;
}

json head_json(const HeadKey& key, const PredictionHead<float>& h) {
    const auto& c = h.config();
    json j{{"codec", codec_name(key.codec)},
           {"metric", metric_name(key.metric)},
           {"prefix", h.prefix()},
           {"feature_dim", h.feature_dim()},
           {"kind", head_kind_name(c.kind)},
           {"n_experts", c.n_experts},
           {"expert_hidden", c.expert_hidden},
           {"mlp_hidden", c.mlp_hidden},
           {"target_transform", c.transform == TargetTransform::Log2 ? "log2" : "identity"},
           {"embedder",
            {{"hidden", c.embedder.hidden},
             {"eb_log_range", {c.embedder.log_lo, c.embedder.log_hi}},
             {"embedding_dim", c.embedder.embedding_dim}}}};
    j["target_norm"] = c.norm ? json{c.norm->tmin, c.norm->tmax} : json(nullptr);
    return j;
}

std::pair<HeadKey, HeadConfig> head_from_json(const json& j) {
    HeadKey key{parse_codec(j.at("codec").get<std::string>()), parse_metric(j.at("metric").get<std::string>())};
    HeadConfig c;
    c.metric = key.metric;
    c.kind = parse_head_kind(j.at("kind").get<std::string>());
    c.n_experts = j.at("n_experts").get<std::size_t>();
    c.expert_hidden = j.at("expert_hidden").get<std::size_t>();
    c.mlp_hidden = j.at("mlp_hidden").get<std::size_t>();
    const auto tt = j.at("target_transform").get<std::string>();
    if (tt != "log2" && tt != "identity") throw FormatError("unknown target transform '" + tt + "'");
    c.transform = tt == "log2" ? TargetTransform::Log2 : TargetTransform::Identity;
    const auto& e = j.at("embedder");
    c.embedder.hidden = e.at("hidden").get<std::vector<std::size_t>>();
    c.embedder.log_lo = e.at("eb_log_range").at(0).get<double>();
    c.embedder.log_hi = e.at("eb_log_range").at(1).get<double>();
    c.embedder.embedding_dim = e.at("embedding_dim").get<std::size_t>();
    const auto& n = j.at("target_norm");
    if (!n.is_null()) c.norm = TargetNorm{n.at(0).get<double>(), n.at(1).get<double>()};
    return {key, c};
}

struct Blob {
    ad::Shape shape;
    std::size_t offset = 0;  // in floats from the start of the blob section
};

void fill(ad::ParameterStore<float>& store, const std::map<std::string, Blob>& blobs,
          std::span<const std::uint8_t> data) {
    for (auto& p : store.all()) {
        auto it = blobs.find(p.name);
        if (it == blobs.end()) throw IntegrityError("model file is missing parameter '" + p.name + "'");
        if (it->second.shape != p.var->value.shape)
            throw IntegrityError("parameter '" + p.name + "' has shape " + ad::shape_string(it->second.shape) +
                                 ", expected " + ad::shape_string(p.var->value.shape));
        auto& dst = p.var->value.data;
        for (std::size_t i = 0; i < dst.size(); ++i)
            dst[i] = std::bit_cast<float>(get_le<std::uint32_t>(data, 4 * (it->second.offset + i)));
    }
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const SurrogateModel& model) {
    std::vector<const ad::Parameter<float>*> order;
    for (const auto& p : model.backbone().params().all()) order.push_back(&p);
    json heads = json::array();
    for (const auto& key : model.head_keys()) {
        const auto& h = model.head(key);
        heads.push_back(head_json(key, h));
        for (const auto& p : h.params().all()) order.push_back(&p);
    }
    json params = json::array();
    for (const auto* p : order) params.push_back({{"name", p->name}, {"shape", p->var->value.shape}});
    const json meta{{"format", "DCQM"},
                    {"version", SurrogateModel::kFormatVersion},
                    {"seed", model.training_seed},
                    {"backbone", backbone_json(model.backbone().config())},
                    {"heads", heads},
                    {"parameters", params}};
    const std::string text = meta.dump();

    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    put_le<std::uint32_t>(out, SurrogateModel::kFormatVersion);
    put_le<std::uint64_t>(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    for (const auto* p : order)
        for (float v : p->var->value.data) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

SurrogateModel deserialize_model(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("not a model file (bad magic)");
    if (bytes.size() < 16) throw IntegrityError("model file truncated in header");
    const auto version = get_le<std::uint32_t>(bytes, 4);
    if (version != SurrogateModel::kFormatVersion)
        throw FormatError("unsupported model format version " + std::to_string(version));
    const auto meta_len = get_le<std::uint64_t>(bytes, 8);
    if (meta_len > bytes.size() - 16) throw IntegrityError("model file truncated in metadata");
    json meta;
    try {
        meta = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(meta_len));
    } catch (const json::exception& e) {
        throw FormatError(std::string("model metadata is not valid JSON: ") + e.what());
    }

    try {
        std::map<std::string, Blob> blobs;
        std::size_t total = 0;
        for (const auto& p : meta.at("parameters")) {
            Blob b{p.at("shape").get<ad::Shape>(), total};
            total += ad::shape_numel(b.shape);
            blobs[p.at("name").get<std::string>()] = b;
        }
        const auto data = bytes.subspan(16 + meta_len);
        if (data.size() < total * 4) throw IntegrityError("model file truncated in parameter data");
        if (data.size() > total * 4) throw IntegrityError("model file has trailing bytes");

        SurrogateModel model(Backbone<float>(backbone_from_json(meta.at("backbone")), 0));
        model.training_seed = meta.at("seed").get<std::uint64_t>();
        fill(model.backbone().params(), blobs, data);
        model.backbone().params().set_trainable("", false);
        for (const auto& hj : meta.at("heads")) {
            auto [key, cfg] = head_from_json(hj);
            PredictionHead<float> head(cfg, hj.at("feature_dim").get<std::size_t>(), hj.at("prefix").get<std::string>(),
                                       0);
            fill(head.params(), blobs, data);
            model.set_head(key, std::move(head));
        }
        return model;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed model metadata: ") + e.what());
    }
}

void save_model(const SurrogateModel& model, const std::filesystem::path& path) {
    const auto bytes = serialize_model(model);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write model '" + path.string() + "'");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("failed writing model '" + path.string() + "'");
}

namespace {
std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read model '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}
}  // namespace

SurrogateModel load_model(const std::filesystem::path& path) { return deserialize_model(read_file(path)); }

std::string read_model_metadata(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("not a model file");
    const auto meta_len = get_le<std::uint64_t>(bytes, 8);
    if (meta_len > bytes.size() - 16) throw IntegrityError("model file truncated in metadata");
    return std::string(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(meta_len));
}

}  // namespace deepcq
