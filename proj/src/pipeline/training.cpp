#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>

#include "deepcq/autodiff/optim.hpp"
#include "deepcq/error.hpp"
#include "deepcq/pipeline.hpp"

namespace deepcq {

namespace {

using BlockKey = std::tuple<std::string, std::uint32_t, std::uint32_t>;

double transform_target(Metric m, double v) { return m == Metric::CR ? std::log2(v) : v; }

std::vector<double> sorted_unique_ebs(std::span<const QualityLabel> rows) {
    std::vector<double> ebs;
    for (const auto& r : rows) ebs.push_back(r.eb_rel);
    std::sort(ebs.begin(), ebs.end());
    ebs.erase(std::unique(ebs.begin(), ebs.end()), ebs.end());
    return ebs;
}

std::size_t index_of(const std::vector<double>& sorted, double v) {
    return static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), v) - sorted.begin());
}

ad::Tensor<float> eb_inputs(const EbEmbedderConfig& cfg, const std::vector<double>& ebs) {
    ad::Tensor<float> u({ebs.size(), 1});
    for (std::size_t i = 0; i < ebs.size(); ++i) u.data[i] = static_cast<float>(normalize_eb(cfg, ebs[i]));
    return u;
}

ad::Tensor<float> block_batch(const TrainingSet& ts, std::span<const std::size_t> blocks) {
    const auto& d = ts.block_dims;
    const std::size_t bs = d.size();
    ad::Tensor<float> x({blocks.size(), 1, d.nz, d.ny, d.nx});
    for (std::size_t i = 0; i < blocks.size(); ++i)
        std::copy_n(ts.blocks.begin() + static_cast<std::ptrdiff_t>(blocks[i] * bs), bs,
                    x.data.begin() + static_cast<std::ptrdiff_t>(i * bs));
    return x;
}

void check_loss(double loss, int epoch) {
    if (!std::isfinite(loss)) throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch));
}

EbEmbedderConfig embedder_for(const TrainingSet& ts, EbEmbedderConfig cfg = {}) {
    cfg.log_lo = ts.eb_log_range.first;
    cfg.log_hi = ts.eb_log_range.second;
    return cfg;
}

// (block, eb) samples with one target slot per task, grouped by block.
struct MultiTaskSamples {
    std::vector<HeadKey> tasks;
    std::vector<double> ebs;
    std::vector<std::vector<std::size_t>> by_block;  // sample ids per block
    std::vector<std::size_t> sample_eb;
    std::vector<float> targets, mask;  // samples x tasks
};

MultiTaskSamples make_samples(const TrainingSet& ts, std::span<const HeadKey> tasks) {
    MultiTaskSamples s;
    s.tasks.assign(tasks.begin(), tasks.end());
    s.ebs = sorted_unique_ebs(ts.rows);
    s.by_block.resize(ts.n_blocks);
    const std::size_t nt = tasks.size();

    std::vector<std::pair<double, double>> range(nt, {INFINITY, -INFINITY});
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> sample_of;  // (block, eb index)
    for (std::size_t r = 0; r < ts.rows.size(); ++r) {
        const auto& row = ts.rows[r];
        for (std::size_t t = 0; t < nt; ++t) {
            if (tasks[t].codec != row.codec) continue;
            const auto v = row.metric(tasks[t].metric);
            if (!v) continue;
            const double y = transform_target(tasks[t].metric, *v);
            range[t] = {std::min(range[t].first, y), std::max(range[t].second, y)};
        }
    }
    for (auto& [lo, hi] : range)
        if (lo == hi) {
            lo -= 0.5;
            hi += 0.5;
        }

    for (std::size_t r = 0; r < ts.rows.size(); ++r) {
        const auto& row = ts.rows[r];
        const std::size_t e = index_of(s.ebs, row.eb_rel);
        auto [it, fresh] = sample_of.try_emplace({ts.row_block[r], e}, s.sample_eb.size());
        if (fresh) {
            s.sample_eb.push_back(e);
            s.by_block[ts.row_block[r]].push_back(it->second);
            s.targets.resize(s.targets.size() + nt, 0.0f);
            s.mask.resize(s.mask.size() + nt, 0.0f);
        }
        for (std::size_t t = 0; t < nt; ++t) {
            if (tasks[t].codec != row.codec) continue;
            const auto v = row.metric(tasks[t].metric);
            if (!v) continue;
            const double y = transform_target(tasks[t].metric, *v);
            s.targets[it->second * nt + t] = static_cast<float>((y - range[t].first) / (range[t].second - range[t].first));
            s.mask[it->second * nt + t] = 1.0f;
        }
    }
    return s;
}

// One epoch over shuffled block batches. `step` gets the graph, the per-sample
// feature rows and the sample ids and returns (loss, weight); `update` runs
// after each backward pass.
template <typename Step, typename Update>
double block_epoch(const TrainingSet& ts, const MultiTaskSamples& s, const Backbone<float>& backbone,
                   std::vector<std::size_t>& order, std::size_t batch, Rng& rng, int epoch, Step&& step,
                   Update&& update) {
    rng.shuffle(order.begin(), order.end());
    double acc = 0.0, weight = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::size_t n = std::min(batch, order.size() - start);
        std::span<const std::size_t> blocks(order.data() + start, n);
        std::vector<std::size_t> ids, local;
        for (std::size_t i = 0; i < n; ++i)
            for (auto sid : s.by_block[blocks[i]]) {
                ids.push_back(sid);
                local.push_back(i);
            }
        if (ids.empty()) continue;
        Graph<float> g;
        auto feats = backbone.forward(g, g.constant(block_batch(ts, blocks)));
        auto [loss, w] = step(g, g.gather_rows(feats, local), ids);
        if (w == 0.0) continue;
        check_loss(loss->value.data[0], epoch);
        g.backward(loss);
        update();
        acc += loss->value.data[0] * w;
        weight += w;
    }
    return weight > 0.0 ? acc / weight : 0.0;
}

}  // namespace

TrainSchedule phase1_defaults(bool desk) { return {desk ? 100 : 250, 0.01, 8, kDefaultSeed}; }
TrainSchedule phase2_defaults(bool desk) { return {desk ? 60 : 150, 0.01, 64, kDefaultSeed}; }

std::vector<HeadKey> available_heads(std::span<const QualityLabel> rows) {
    std::vector<HeadKey> out;
    for (auto c : kAllCodecs)
        for (auto m : kAllMetrics) {
            const bool any = std::any_of(rows.begin(), rows.end(),
                                         [&](const QualityLabel& r) { return r.codec == c && r.metric(m).has_value(); });
            if (any) out.push_back({c, m});
        }
    return out;
}

TrainingSet assemble_training_set(const Dataset& data, const LabelTable& labels) {
    const auto& prov = labels.provenance;
    if (prov.manifest_hash != data.manifest.hash())
        throw IntegrityError("labels were generated from a different dataset manifest");
    if (labels.rows.empty()) throw DataError("label table is empty");

    TrainingSet ts;
    ts.block_dims = prov.blocks.dims;
    std::map<BlockKey, std::size_t> index;
    std::map<std::pair<std::string, std::uint32_t>, std::vector<Block>> cache;
    std::vector<std::pair<double, double>> ranges;  // per assembled block
    for (const auto& row : labels.rows) {
        BlockKey key{row.field, row.timestep, row.block_id};
        auto it = index.find(key);
        if (it == index.end()) {
            auto& blocks = cache[{row.field, row.timestep}];
            if (blocks.empty()) blocks = label_blocks(data.volume(row.field, row.timestep), prov.blocks, prov.seed);
            if (row.block_id >= blocks.size())
                throw IntegrityError("label references block " + std::to_string(row.block_id) + " beyond the sample");
            const auto& b = blocks[row.block_id];
            auto normalized = minmax_normalize(b).first;
            ts.blocks.insert(ts.blocks.end(), normalized.values.begin(), normalized.values.end());
            it = index.emplace(key, ts.n_blocks++).first;
            const auto [lo, hi] = std::minmax_element(b.values.begin(), b.values.end());
            ranges.push_back({*lo, *hi});
        }
        if (ranges[it->second].first != row.block_min || ranges[it->second].second != row.block_max)
            throw IntegrityError("label row for " + row.field + " t" + std::to_string(row.timestep) + " block " +
                                 std::to_string(row.block_id) + " does not match the dataset");
        ts.rows.push_back(row);
        ts.row_block.push_back(it->second);
    }
    const auto ebs = sorted_unique_ebs(ts.rows);
    double lo = std::log10(ebs.front()), hi = std::log10(ebs.back());
    if (lo == hi) {
        lo -= 0.5;
        hi += 0.5;
    }
    ts.eb_log_range = {lo, hi};
    return ts;
}

BackboneResult train_backbone(const TrainingSet& train, const BackboneConfig& cfg, const TrainSchedule& schedule) {
    if (!(cfg.block_dims == train.block_dims))
        throw ShapeError("backbone input " + to_string(cfg.block_dims) + " differs from label blocks " +
                         to_string(train.block_dims));
    const auto tasks = available_heads(train.rows);
    if (tasks.empty()) throw DataError("no defined targets to train the backbone on");
    const auto samples = make_samples(train, tasks);
    const std::size_t nt = tasks.size();

    Backbone<float> backbone(cfg, derive_seed(schedule.seed, "phase1.backbone"));
    ad::ParameterStore<float> prov;
    Rng init(derive_seed(schedule.seed, "phase1.provisional"));
    const auto ecfg = embedder_for(train);
    EbEmbedder<float> embedder(prov, "provisional.efe", ecfg, init);
    const std::size_t fused = cfg.feature_dim + ecfg.embedding_dim;
    auto fc0 = ad::Linear<float>::create(prov, "provisional.fc0", fused, 64, init);
    auto fc1 = ad::Linear<float>::create(prov, "provisional.fc1", 64, nt, init);
    const auto u = eb_inputs(ecfg, samples.ebs);

    ad::Adam<float> opt_b, opt_h;
    Rng rng(derive_seed(schedule.seed, "phase1.shuffle"));
    std::vector<std::size_t> order(train.n_blocks);
    std::iota(order.begin(), order.end(), 0);
    BackboneResult result{std::move(backbone), {}};
    const std::size_t batch = std::max<std::size_t>(schedule.batch, 1);

    for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
        const double lr = ad::step_decay_lr(schedule.lr, epoch, schedule.epochs);
        auto step = [&](Graph<float>& g, const Var<float>& feats, const std::vector<std::size_t>& ids) {
            std::vector<std::size_t> eb_rows(ids.size());
            ad::Tensor<float> target({ids.size(), nt});
            std::vector<float> mask(ids.size() * nt);
            for (std::size_t i = 0; i < ids.size(); ++i) {
                eb_rows[i] = samples.sample_eb[ids[i]];
                std::copy_n(samples.targets.begin() + static_cast<std::ptrdiff_t>(ids[i] * nt), nt,
                            target.data.begin() + static_cast<std::ptrdiff_t>(i * nt));
                std::copy_n(samples.mask.begin() + static_cast<std::ptrdiff_t>(ids[i] * nt), nt,
                            mask.begin() + static_cast<std::ptrdiff_t>(i * nt));
            }
            const double w = std::accumulate(mask.begin(), mask.end(), 0.0);
            auto emb = g.gather_rows(embedder.forward(g, g.constant(u)), eb_rows);
            auto out = fc1(g, g.relu(fc0(g, g.concat({feats, emb}))));
            return std::make_pair(g.mse_loss(out, target, mask), w);
        };
        auto update = [&] {
            opt_b.step(result.backbone.params(), lr);
            opt_h.step(prov, lr);
            result.backbone.params().zero_grad();
            prov.zero_grad();
        };
        const double loss = block_epoch(train, samples, result.backbone, order, batch, rng, epoch, step, update);
        check_loss(loss, epoch);
        result.loss.push_back(loss);
    }
    result.backbone.params().set_trainable("", false);
    return result;
}

HeadResult train_head(const Backbone<float>& backbone, const TrainingSet& train, const HeadKey& key,
                      const HeadConfig& cfg, const TrainSchedule& schedule) {
    const auto hash_before = backbone.params().hash();
    for (const auto& p : backbone.params().all())
        if (p.trainable) throw StateError("backbone must be frozen before head training");

    std::vector<std::size_t> rows;
    std::vector<double> raw;
    for (std::size_t r = 0; r < train.rows.size(); ++r) {
        const auto& row = train.rows[r];
        if (row.codec != key.codec) continue;
        const auto v = row.metric(key.metric);
        if (!v) continue;
        rows.push_back(r);
        raw.push_back(*v);
    }
    if (rows.empty()) throw DataError("no defined " + key.name() + " targets in the training labels");

    HeadConfig hc = cfg;
    hc.metric = key.metric;
    hc.embedder = embedder_for(train, cfg.embedder);
    hc.norm.reset();
    HeadResult result{PredictionHead<float>(hc, backbone.config().feature_dim, "heads." + key.name(),
                                            derive_seed(schedule.seed, "phase2", fnv1a64(key.name()))),
                      {}};
    auto& head = result.head;
    head.fit_target_norm(raw);
    std::vector<float> target(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) target[i] = static_cast<float>(head.normalize_target(raw[i]));

    const std::size_t f = backbone.config().feature_dim;
    const auto features = backbone.extract_features(train.blocks, train.n_blocks);
    ad::Adam<float> opt;
    Rng rng(derive_seed(schedule.seed, "phase2.shuffle", fnv1a64(key.name())));
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t batch = std::max<std::size_t>(schedule.batch, 1);

    for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
        const double lr = ad::step_decay_lr(schedule.lr, epoch, schedule.epochs);
        rng.shuffle(order.begin(), order.end());
        double acc = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t n = std::min(batch, order.size() - start);
            ad::Tensor<float> x({n, f}), y({n, 1});
            std::vector<double> ebs;
            for (std::size_t i = 0; i < n; ++i) ebs.push_back(train.rows[rows[order[start + i]]].eb_rel);
            std::vector<double> uniq = ebs;
            std::sort(uniq.begin(), uniq.end());
            uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
            std::vector<std::size_t> eb_rows(n);
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t k = order[start + i];
                const std::size_t b = train.row_block[rows[k]];
                std::copy_n(features.begin() + static_cast<std::ptrdiff_t>(b * f), f,
                            x.data.begin() + static_cast<std::ptrdiff_t>(i * f));
                y.data[i] = target[k];
                eb_rows[i] = index_of(uniq, ebs[i]);
            }
            Graph<float> g;
            auto emb = g.gather_rows(head.embed(g, g.constant(eb_inputs(head.config().embedder, uniq))), eb_rows);
            auto loss = g.rmse_loss(head.predict(g, g.constant(std::move(x)), emb).prediction, y);
            check_loss(loss->value.data[0], epoch);
            g.backward(loss);
            opt.step(head.params(), lr);
            head.params().zero_grad();
            acc += loss->value.data[0] * static_cast<double>(n);
        }
        const double loss = acc / static_cast<double>(rows.size());
        check_loss(loss, epoch);
        result.loss.push_back(loss);
    }
    if (backbone.params().hash() != hash_before) throw StateError("backbone parameters changed during head training");
    return result;
}

double train_from_scratch(const TrainingSet& train, const BackboneConfig& cfg, const HeadKey& key,
                          const HeadConfig& head_cfg, const TrainSchedule& schedule) {
    const HeadKey tasks[] = {key};
    const auto samples = make_samples(train, tasks);
    const std::string tag = "scratch." + key.name();
    Backbone<float> backbone(cfg, derive_seed(schedule.seed, tag + ".backbone"));
    HeadConfig hc = head_cfg;
    hc.metric = key.metric;
    hc.embedder = embedder_for(train, head_cfg.embedder);
    PredictionHead<float> head(hc, cfg.feature_dim, "heads." + key.name(), derive_seed(schedule.seed, tag + ".head"));
    const auto u = eb_inputs(hc.embedder, samples.ebs);

    ad::Adam<float> opt_b, opt_h;
    Rng rng(derive_seed(schedule.seed, tag + ".shuffle"));
    std::vector<std::size_t> order(train.n_blocks);
    std::iota(order.begin(), order.end(), 0);
    const std::size_t batch = std::max<std::size_t>(schedule.batch, 1);
    double loss = 0.0;
    for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
        const double lr = ad::step_decay_lr(schedule.lr, epoch, schedule.epochs);
        auto step = [&](Graph<float>& g, const Var<float>& feats, const std::vector<std::size_t>& ids) {
            std::vector<std::size_t> eb_rows(ids.size());
            ad::Tensor<float> target({ids.size(), 1});
            std::vector<float> mask(ids.size());
            for (std::size_t i = 0; i < ids.size(); ++i) {
                eb_rows[i] = samples.sample_eb[ids[i]];
                target.data[i] = samples.targets[ids[i]];
                mask[i] = samples.mask[ids[i]];
            }
            const double w = std::accumulate(mask.begin(), mask.end(), 0.0);
            auto emb = g.gather_rows(head.embed(g, g.constant(u)), eb_rows);
            return std::make_pair(g.rmse_loss(head.predict(g, feats, emb).prediction, target, mask), w);
        };
        auto update = [&] {
            opt_b.step(backbone.params(), lr);
            opt_h.step(head.params(), lr);
            backbone.params().zero_grad();
            head.params().zero_grad();
        };
        loss = block_epoch(train, samples, backbone, order, batch, rng, epoch, step, update);
        check_loss(loss, epoch);
    }
    return loss;
}

SurrogateModel train_model(const TrainingSet& train, const BackboneConfig& backbone_cfg, HeadKind kind,
                           const TrainSchedule& phase1, const TrainSchedule& phase2) {
    auto p1 = train_backbone(train, backbone_cfg, phase1);
    SurrogateModel model(std::move(p1.backbone));
    model.training_seed = phase1.seed;
    const auto hash = model.backbone_hash();
    for (const auto& key : available_heads(train.rows)) {
        auto h = train_head(model.backbone(), train, key, default_head_config(key.metric, kind), phase2);
        model.set_head(key, std::move(h.head));
    }
    if (model.backbone_hash() != hash) throw StateError("backbone parameters changed during head training");
    return model;
}

}  // namespace deepcq
