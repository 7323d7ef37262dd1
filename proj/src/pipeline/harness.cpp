#include <algorithm>
#include <chrono>

#include "deepcq/error.hpp"
#include "deepcq/pipeline.hpp"

namespace deepcq {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<AblationRow> ablation_moe(const Backbone<float>& backbone, const TrainingSet& train, const Dataset& data,
                                      const LabelTable& test, const TrainSchedule& phase2) {
    SurrogateModel plain(backbone.clone()), moe(backbone.clone());
    for (const auto& key : available_heads(train.rows)) {
        plain.set_head(key, train_head(backbone, train, key, default_head_config(key.metric, HeadKind::PlainMlp), phase2)
                                .head);
        moe.set_head(key, train_head(backbone, train, key, default_head_config(key.metric, HeadKind::Moe), phase2).head);
    }
    const auto rb = evaluate(plain, data, test);
    const auto rm = evaluate(moe, data, test);
    std::vector<AblationRow> out;
    for (const auto& r : rb.mape) {
        const auto* m = rm.find(r.codec, r.metric, r.field);
        if (!m) throw StateError("ablation reports disagree on " + r.field);
        out.push_back({r.codec, r.metric, r.field, r.mape, m->mape});
    }
    return out;
}

std::string ablation_to_csv(std::span<const AblationRow> rows) {
    std::string out = std::string(kAblationCsvHeader) + "\n";
    for (const auto& r : rows)
        out += std::string(codec_name(r.codec)) + "," + std::string(metric_name(r.metric)) + "," + r.field + "," +
               format_real(r.mape_plain) + "," + format_real(r.mape_moe) + "\n";
    return out;
}

TimingReport timing_sweep(const VolumeField& field, const std::filesystem::path& model_path, const TimingConfig& cfg) {
    validate_eb_grid(cfg.eb_grid);
    if (cfg.repetitions < 1) throw ArgumentError("repetitions must be at least 1");
    if (cfg.blocks == 0) throw ArgumentError("block count must be positive");
    const std::size_t n = cfg.eb_grid.size();
    std::vector<std::vector<double>> gt(n), sur(n);
    std::vector<double> gt_per_eb, sur_inc;
    for (int rep = 0; rep < cfg.repetitions; ++rep) {
        std::vector<double> g(n), s(n);
        auto t0 = Clock::now();
        for (std::size_t i = 0; i < n; ++i) {
            const auto outcome = compress_roundtrip(cfg.key.codec, field, cfg.eb_grid[i]);
            volatile double sink = compression_ratio(4 * field.values().size(), outcome.compressed_bytes);
            sink = psnr(field.values(), outcome.reconstruction).value_or(0.0);
            sink = ssim3d(field.values(), outcome.reconstruction, field.dims()).value_or(0.0);
            (void)sink;
            g[i] = seconds_since(t0);
        }
        t0 = Clock::now();
        const auto model = load_model(model_path);
        const auto blocks = sample_blocks(field, model.backbone().config().block_dims, cfg.blocks,
                                          derive_seed(cfg.seed, "timing.blocks"));
        const auto feats = model.features(blocks);
        std::vector<std::size_t> rows(blocks.size());
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
        for (std::size_t i = 0; i < n; ++i) {
            const std::vector<double> ebs(rows.size(), cfg.eb_grid[i]);
            volatile double sink = model.predict_batch(cfg.key, feats, rows, ebs).front().value;
            (void)sink;
            s[i] = seconds_since(t0);
        }
        for (std::size_t i = 0; i < n; ++i) {
            gt[i].push_back(g[i]);
            sur[i].push_back(s[i]);
        }
        gt_per_eb.push_back(g.back() / static_cast<double>(n));
        sur_inc.push_back(n > 1 ? (s.back() - s.front()) / static_cast<double>(n - 1) : s.front());
    }
    TimingReport r;
    r.eb_grid = cfg.eb_grid;
    for (std::size_t i = 0; i < n; ++i) {
        r.gt_cumulative.push_back(median(gt[i]));
        r.surrogate_cumulative.push_back(median(sur[i]));
    }
    // Medians of cumulative sums need not be monotone; enforce the cumulative shape.
    for (std::size_t i = 1; i < n; ++i) {
        r.gt_cumulative[i] = std::max(r.gt_cumulative[i], r.gt_cumulative[i - 1]);
        r.surrogate_cumulative[i] = std::max(r.surrogate_cumulative[i], r.surrogate_cumulative[i - 1]);
    }
    r.gt_per_eb = median(gt_per_eb);
    r.surrogate_incremental = median(sur_inc);
    return r;
}

std::string timing_to_csv(const TimingReport& r) {
    std::string out = std::string(kTimingCsvHeader) + "\n";
    for (std::size_t i = 0; i < r.eb_grid.size(); ++i)
        out += std::to_string(i) + "," + format_real(r.eb_grid[i]) + "," + format_real(r.gt_cumulative[i]) + "," +
               format_real(r.surrogate_cumulative[i]) + "\n";
    return out;
}

CostReport two_stage_cost(const TrainingSet& train, const BackboneConfig& cfg, const TrainSchedule& phase1,
                          const TrainSchedule& phase2) {
    const auto keys = available_heads(train.rows);
    CostReport r;
    r.tasks = keys.size();
    auto t0 = Clock::now();
    auto p1 = train_backbone(train, cfg, phase1);
    for (const auto& k : keys) train_head(p1.backbone, train, k, default_head_config(k.metric), phase2);
    r.two_stage_s = seconds_since(t0);
    t0 = Clock::now();
    for (const auto& k : keys) train_from_scratch(train, cfg, k, default_head_config(k.metric), phase1);
    r.from_scratch_s = seconds_since(t0);
    return r;
}

SyntheticSpec reference_synthetic_spec() {
    SyntheticSpec s;
    s.dims = {64, 64, 64};
    s.seed = kDefaultSeed;
    return s;
}

}  // namespace deepcq
