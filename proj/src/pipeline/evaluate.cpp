#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <tuple>

#include "deepcq/error.hpp"
#include "deepcq/pipeline.hpp"
#include "json.hpp"

namespace deepcq {

std::string_view granularity_name(Granularity g) { return g == Granularity::Block ? "block" : "field"; }

Granularity parse_granularity(std::string_view name) {
    if (name == "block") return Granularity::Block;
    if (name == "field") return Granularity::Field;
    throw ArgumentError("unknown granularity '" + std::string(name) + "'");
}

const MapeRow* EvalReport::find(CodecId c, Metric m, const std::string& field) const {
    for (const auto& r : mape)
        if (r.codec == c && r.metric == m && r.field == field) return &r;
    return nullptr;
}

std::string EvalReport::to_json_string() const {
    using nlohmann::json;
    json rows = json::array(), curve = json::array();
    for (const auto& r : mape)
        rows.push_back({{"codec", codec_name(r.codec)},
                        {"metric", metric_name(r.metric)},
                        {"field", r.field},
                        {"mape", r.mape},
                        {"count", r.count}});
    for (const auto& c : curves)
        curve.push_back({{"codec", codec_name(c.codec)},
                         {"metric", metric_name(c.metric)},
                         {"field", c.field},
                         {"eb_rel", c.eb_rel},
                         {"ground_truth", c.ground_truth},
                         {"prediction", c.prediction},
                         {"pe", c.pe}});
    const json j{{"granularity", granularity_name(granularity)}, {"mape", rows}, {"pe_curves", curve}};
    return j.dump(2) + "\n";
}

EvalReport build_report(std::vector<EvalPoint> points, Granularity g) {
    std::erase_if(points, [](const EvalPoint& p) { return p.ground_truth == 0.0; });
    std::sort(points.begin(), points.end(), [](const EvalPoint& a, const EvalPoint& b) {
        return std::tie(a.codec, a.metric, a.field, a.eb_rel, a.timestep, a.block_id) <
               std::tie(b.codec, b.metric, b.field, b.eb_rel, b.timestep, b.block_id);
    });
    EvalReport rep;
    rep.granularity = g;

    using Group = std::tuple<CodecId, Metric, std::string>;
    std::map<Group, std::vector<std::pair<double, double>>> pairs;
    std::map<std::tuple<CodecId, Metric, std::string, double>, std::pair<std::vector<double>, std::vector<double>>>
        per_eb;
    for (const auto& p : points) {
        pairs[{p.codec, p.metric, p.field}].emplace_back(p.ground_truth, p.prediction);
        auto& [gt, pr] = per_eb[{p.codec, p.metric, p.field, p.eb_rel}];
        gt.push_back(p.ground_truth);
        pr.push_back(p.prediction);
    }
    for (const auto& [k, v] : pairs)
        rep.mape.push_back({std::get<0>(k), std::get<1>(k), std::get<2>(k), mape(v), v.size()});
    auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    for (const auto& [k, v] : per_eb) {
        PeCurvePoint c{std::get<0>(k), std::get<1>(k), std::get<2>(k), std::get<3>(k), mean(v.first), mean(v.second), 0.0};
        c.pe = c.ground_truth != 0.0 ? percentage_error(c.ground_truth, c.prediction) : 0.0;
        rep.curves.push_back(c);
    }
    rep.points = std::move(points);
    return rep;
}

namespace {

std::vector<EvalPoint> block_points(const SurrogateModel& model, const Dataset& data, const LabelTable& test) {
    const auto ts = assemble_training_set(data, test);
    const auto feats = model.backbone().extract_features(ts.blocks, ts.n_blocks);
    std::vector<EvalPoint> out;
    for (const auto& key : available_heads(ts.rows)) {
        std::vector<std::size_t> rows, blocks;
        std::vector<double> ebs;
        for (std::size_t r = 0; r < ts.rows.size(); ++r)
            if (ts.rows[r].codec == key.codec && ts.rows[r].metric(key.metric)) {
                rows.push_back(r);
                blocks.push_back(ts.row_block[r]);
                ebs.push_back(ts.rows[r].eb_rel);
            }
        const auto pred = model.predict_batch(key, feats, blocks, ebs);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto& row = ts.rows[rows[i]];
            out.push_back({key.codec, key.metric, row.field, row.timestep, row.block_id, row.eb_rel,
                           *row.metric(key.metric), pred[i].value});
        }
    }
    return out;
}

std::vector<EvalPoint> field_points(const SurrogateModel& model, const Dataset& data, const LabelTable& test,
                                    const EvalConfig& cfg) {
    const auto keys = available_heads(test.rows);
    for (const auto& k : keys) (void)model.head(k);
    std::set<std::pair<std::string, std::uint32_t>> volumes;
    for (const auto& r : test.rows) volumes.insert({r.field, r.timestep});
    const auto& grid = test.provenance.eb_grid;
    std::vector<EvalPoint> out;
    for (const auto& [field, t] : volumes) {
        const auto& vol = data.volume(field, t);
        const auto blocks = sample_blocks(vol, model.backbone().config().block_dims, cfg.field_blocks,
                                          derive_seed(cfg.seed, "eval.field." + field, t));
        const auto feats = model.features(blocks);
        std::vector<std::size_t> rows(blocks.size());
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
        for (auto codec : test.provenance.codecs) {
            for (double eb : grid) {
                bool needed = false;
                for (const auto& k : keys) needed |= k.codec == codec;
                if (!needed) continue;
                const auto outcome = compress_roundtrip(codec, vol, eb);
                const std::size_t n = vol.values().size();
                std::optional<double> truth[3] = {compression_ratio(4 * n, outcome.compressed_bytes), std::nullopt,
                                                  std::nullopt};
                if (vol.vmin() != vol.vmax()) {
                    truth[1] = psnr(vol.values(), outcome.reconstruction);
                    truth[2] = ssim3d(vol.values(), outcome.reconstruction, vol.dims());
                }
                const std::vector<double> ebs(rows.size(), eb);
                for (const auto& k : keys) {
                    if (k.codec != codec || !truth[static_cast<int>(k.metric)]) continue;
                    const auto pred = model.predict_batch(k, feats, rows, ebs);
                    double s = 0.0;
                    for (const auto& p : pred) s += p.value;
                    out.push_back({codec, k.metric, field, t, 0, eb, *truth[static_cast<int>(k.metric)],
                                   s / static_cast<double>(pred.size())});
                }
            }
        }
    }
    return out;
}

}  // namespace

double predict_volume(const SurrogateModel& model, const VolumeField& volume, const HeadKey& key, double eb_rel,
                      std::size_t blocks, std::uint64_t seed) {
    if (blocks == 0) throw ArgumentError("block count must be positive");
    const auto drawn =
        sample_blocks(volume, model.backbone().config().block_dims, blocks, derive_seed(seed, "predict.blocks"));
    const auto feats = model.features(drawn);
    std::vector<std::size_t> rows(drawn.size());
    std::iota(rows.begin(), rows.end(), 0);
    const std::vector<double> ebs(rows.size(), eb_rel);
    double sum = 0.0;
    for (const auto& p : model.predict_batch(key, feats, rows, ebs)) sum += p.value;
    return sum / static_cast<double>(rows.size());
}

EvalReport evaluate(const SurrogateModel& model, const Dataset& data, const LabelTable& test, const EvalConfig& cfg) {
    if (test.rows.empty()) throw DataError("no test labels to evaluate");
    auto points = cfg.granularity == Granularity::Block ? block_points(model, data, test)
                                                        : field_points(model, data, test, cfg);
    return build_report(std::move(points), cfg.granularity);
}

std::vector<std::filesystem::path> write_eval_outputs(const EvalReport& report, const std::filesystem::path& outdir) {
    std::error_code ec;
    std::filesystem::create_directories(outdir, ec);
    if (ec) throw IoError("cannot create '" + outdir.string() + "': " + ec.message());
    std::vector<std::filesystem::path> written;
    auto write = [&](const std::filesystem::path& p, const std::string& text) {
        std::ofstream f(p, std::ios::binary);
        if (!f || !(f << text)) throw IoError("cannot write '" + p.string() + "'");
        written.push_back(p);
    };
    write(outdir / "report.json", report.to_json_string());
    std::map<std::tuple<CodecId, Metric, std::string>, std::string> files;
    for (const auto& c : report.curves) {
        auto& text = files[{c.codec, c.metric, c.field}];
        if (text.empty()) text = "eb_rel,ground_truth,prediction,pe\n";
        text += format_real(c.eb_rel) + "," + format_real(c.ground_truth) + "," + format_real(c.prediction) + "," +
                format_real(c.pe) + "\n";
    }
    for (const auto& [k, text] : files)
        write(outdir / ("pe_" + std::string(codec_name(std::get<0>(k))) + "_" +
                        std::string(metric_name(std::get<1>(k))) + "_" + std::get<2>(k) + ".csv"),
              text);
    return written;
}

}  // namespace deepcq
