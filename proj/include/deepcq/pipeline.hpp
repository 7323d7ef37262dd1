#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "deepcq/codec.hpp"
#include "deepcq/dataset.hpp"
#include "deepcq/quality.hpp"
#include "deepcq/surrogate.hpp"

namespace deepcq {

// ---- error-bound grids -----------------------------------------------------

/// n log-uniform points from lo to hi inclusive.
std::vector<double> eb_grid_logspace(double lo, double hi, std::size_t n = 20);
/// Named ranges: nyx [1e-5,1e-3], hurricane [1e-5,1e-2], miranda [1e-4,1e-2], rtm [1e-4,1e-3].
std::vector<double> eb_preset(const std::string& name, std::size_t n = 20);
std::vector<std::string> eb_preset_names();
/// Throws ArgumentError unless non-empty, positive and strictly increasing.
void validate_eb_grid(std::span<const double> grid);

// ---- labels ----------------------------------------------------------------

struct BlockSpec {
    Dims3 dims{16, 16, 16};
    std::size_t count = 32;  // per (field, timestep)
};

struct LabelProvenance {
    std::uint64_t manifest_hash = 0;
    std::vector<CodecId> codecs;
    std::vector<double> eb_grid;
    BlockSpec blocks;
    std::uint64_t seed = 0;

    std::string to_json_string() const;
    static LabelProvenance from_json_string(const std::string& text);
};

struct LabelTable {
    std::vector<QualityLabel> rows;  // canonical order: field, timestep, block_id, codec, eb_rel
    LabelProvenance provenance;

    std::vector<std::uint32_t> timesteps() const;
    std::vector<std::string> fields() const;
};

/// The blocks a label table refers to for one volume; block_id = draw index.
std::vector<Block> label_blocks(const VolumeField& volume, const BlockSpec& spec, std::uint64_t seed);

/// Ground truth for every (field, timestep, block, codec, eb). workers = 0 means
/// hardware concurrency; output does not depend on it.
LabelTable build_labels(const Dataset& data, std::span<const CodecId> codecs, std::span<const double> eb_grid,
                        const BlockSpec& blocks, std::uint64_t seed, unsigned workers = 1);

/// <csv> plus <csv stem>.provenance.json next to it.
void write_label_table(const std::filesystem::path& csv_path, const LabelTable& table);
LabelTable read_label_table(const std::filesystem::path& csv_path);

// ---- splits ----------------------------------------------------------------

enum class SplitMode { OddEven, LastTimestepOut };
std::string_view split_mode_name(SplitMode m);  // "odd_even" / "last_timestep_out"
SplitMode parse_split_mode(std::string_view name);

struct SplitSpec {
    SplitMode mode = SplitMode::OddEven;
};

/// Partitions by timestep. Throws SplitError when either side would be empty.
std::pair<LabelTable, LabelTable> split(const LabelTable& labels, const SplitSpec& spec);

// ---- training --------------------------------------------------------------

/// Normalized blocks referenced by a label table plus, per row, the block index.
struct TrainingSet {
    Dims3 block_dims;
    std::vector<float> blocks;  // normalized, concatenated
    std::size_t n_blocks = 0;
    std::vector<QualityLabel> rows;
    std::vector<std::size_t> row_block;
    std::pair<double, double> eb_log_range{-5.0, -1.0};
};

/// Re-derives the blocks from the dataset; throws IntegrityError when a row's
/// recorded block range disagrees with the data.
TrainingSet assemble_training_set(const Dataset& data, const LabelTable& labels);

struct TrainSchedule {
    int epochs = 0;
    double lr = 0.01;
    std::size_t batch = 0;  // blocks per step (phase 1) or rows per step (phase 2)
    std::uint64_t seed = kDefaultSeed;
};

TrainSchedule phase1_defaults(bool desk = false);  // 250 epochs (100 desk), 8 blocks
TrainSchedule phase2_defaults(bool desk = false);  // 150 epochs (60 desk), 64 rows

struct BackboneResult {
    Backbone<float> backbone;
    std::vector<double> loss;  // one entry per epoch
};

struct HeadResult {
    PredictionHead<float> head;
    std::vector<double> loss;
};

/// Phase 1: joint multi-task training of the backbone through a provisional
/// head with one output per (codec, metric); the backbone comes back frozen.
BackboneResult train_backbone(const TrainingSet& train, const BackboneConfig& cfg, const TrainSchedule& schedule);

/// Phase 2: one head on frozen features, RMSE loss on normalized targets.
HeadResult train_head(const Backbone<float>& backbone, const TrainingSet& train, const HeadKey& key,
                      const HeadConfig& cfg, const TrainSchedule& schedule);

/// Backbone and head trained together on one task from scratch (cost baseline).
double train_from_scratch(const TrainingSet& train, const BackboneConfig& cfg, const HeadKey& key,
                          const HeadConfig& head_cfg, const TrainSchedule& schedule);

/// (codec, metric) pairs with at least one defined target, in canonical order.
std::vector<HeadKey> available_heads(std::span<const QualityLabel> rows);

/// Backbone plus one head per available (codec, metric).
SurrogateModel train_model(const TrainingSet& train, const BackboneConfig& backbone_cfg, HeadKind kind,
                           const TrainSchedule& phase1, const TrainSchedule& phase2);

// ---- evaluation ------------------------------------------------------------

enum class Granularity { Block, Field };
std::string_view granularity_name(Granularity g);
Granularity parse_granularity(std::string_view name);

struct EvalPoint {
    CodecId codec = CodecId::PredEb;
    Metric metric = Metric::CR;
    std::string field;
    std::uint32_t timestep = 0;
    std::uint32_t block_id = 0;  // unused at field granularity
    double eb_rel = 0.0;
    double ground_truth = 0.0;
    double prediction = 0.0;
};

struct MapeRow {
    CodecId codec = CodecId::PredEb;
    Metric metric = Metric::CR;
    std::string field;
    double mape = 0.0;
    std::size_t count = 0;
};

struct PeCurvePoint {
    CodecId codec = CodecId::PredEb;
    Metric metric = Metric::CR;
    std::string field;
    double eb_rel = 0.0;
    double ground_truth = 0.0;  // mean over blocks/timesteps at this eb
    double prediction = 0.0;
    double pe = 0.0;
};

struct EvalReport {
    Granularity granularity = Granularity::Block;
    std::vector<MapeRow> mape;
    std::vector<PeCurvePoint> curves;
    std::vector<EvalPoint> points;

    const MapeRow* find(CodecId c, Metric m, const std::string& field) const;
    std::string to_json_string() const;
};

/// Aggregates points into MAPE rows and per-eb curves. Points whose ground
/// truth is zero have no percentage error and are dropped.
EvalReport build_report(std::vector<EvalPoint> points, Granularity g);

struct EvalConfig {
    Granularity granularity = Granularity::Block;
    std::size_t field_blocks = 32;  // fresh blocks per test volume at field granularity
    std::uint64_t seed = kDefaultSeed;
};

EvalReport evaluate(const SurrogateModel& model, const Dataset& data, const LabelTable& test,
                    const EvalConfig& cfg = {});

/// Mean head prediction over `blocks` blocks drawn from the volume with
/// derive_seed(seed, "predict.blocks").
double predict_volume(const SurrogateModel& model, const VolumeField& volume, const HeadKey& key, double eb_rel,
                      std::size_t blocks, std::uint64_t seed);

/// report.json plus pe_<codec>_<metric>_<field>.csv with columns eb_rel,ground_truth,prediction,pe.
std::vector<std::filesystem::path> write_eval_outputs(const EvalReport& report, const std::filesystem::path& outdir);

// ---- harnesses -------------------------------------------------------------

struct AblationRow {
    CodecId codec = CodecId::PredEb;
    Metric metric = Metric::CR;
    std::string field;
    double mape_plain = 0.0;  // B
    double mape_moe = 0.0;    // M
};

/// Plain and MoE heads on the same frozen backbone with matched seeds.
std::vector<AblationRow> ablation_moe(const Backbone<float>& backbone, const TrainingSet& train, const Dataset& data,
                                      const LabelTable& test, const TrainSchedule& phase2);
inline constexpr const char* kAblationCsvHeader = "codec,metric,field,B,M";
std::string ablation_to_csv(std::span<const AblationRow> rows);

struct TimingConfig {
    HeadKey key;
    std::vector<double> eb_grid;
    std::size_t blocks = 32;
    int repetitions = 5;
    std::uint64_t seed = kDefaultSeed;
};

struct TimingReport {
    std::vector<double> eb_grid;
    std::vector<double> gt_cumulative;         // median over repetitions, per eb index
    std::vector<double> surrogate_cumulative;  // includes model load and feature extraction at index 0
    double gt_per_eb = 0.0;                    // median over repetitions of total / n
    double surrogate_incremental = 0.0;        // median over repetitions of (S[n-1] - S[0]) / (n - 1)
};

TimingReport timing_sweep(const VolumeField& field, const std::filesystem::path& model_path, const TimingConfig& cfg);
// Wall-clock columns carry a [nondet] marker: they are exempt from byte-identity checks.
inline constexpr const char* kTimingCsvHeader =
    "eb_index,eb_rel,gt_cumulative_s[nondet],surrogate_cumulative_s[nondet]";
std::string timing_to_csv(const TimingReport& r);

struct CostReport {
    double two_stage_s = 0.0;     // one backbone training + one head per task
    double from_scratch_s = 0.0;  // one joint backbone + head training per task
    std::size_t tasks = 0;
};

/// From-scratch runs use phase1.epochs so both sides see the same backbone epochs per model.
CostReport two_stage_cost(const TrainingSet& train, const BackboneConfig& cfg, const TrainSchedule& phase1,
                          const TrainSchedule& phase2);

// ---- reference data ----------------------------------------------------------

/// Seeded synthetic dataset used by the acceptance checks: one field, 64^3.
SyntheticSpec reference_synthetic_spec();
inline constexpr std::uint32_t kReferenceTimesteps = 4;
inline constexpr const char* kReferenceField = "synthetic";

}  // namespace deepcq
