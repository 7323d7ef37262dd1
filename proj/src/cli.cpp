#include "deepcq/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "deepcq/error.hpp"
#include "deepcq/pipeline.hpp"
#include "json.hpp"

namespace deepcq::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct Options {
    std::uint64_t seed = kDefaultSeed;
    std::string outdir;
    std::string config;
    unsigned workers = 0;

    std::string dims = "64,64,64";
    std::uint32_t timesteps = 4;
    std::string fields = kReferenceField;
    int modes = 6;
    double max_frequency = 4.0;
    double noise = 0.02;
    double drift = 0.05;

    std::string manifest;
    std::string codecs = "pred-eb,xform-eb";
    std::string eb_preset = "nyx";
    std::string eb_range;
    std::string eb_grid;
    std::size_t eb_points = 20;
    std::string block_dims = "16,16,16";
    std::size_t blocks = 32;

    std::string labels;
    std::string split = "odd_even";
    int epochs = 0;
    double lr = 0.01;
    std::size_t batch = 0;
    bool desk = false;
    std::size_t stem_channels = 16;
    std::string stages = "2x16,2x32";
    std::size_t feature_dim = 64;
    std::string codec;
    std::string metric;
    std::string kind = "moe";

    std::string model;
    double eb = 0.0;
    std::string input;
    std::string granularity = "block";
    std::size_t field_blocks = 32;
    int repetitions = 5;
};

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) out.push_back(item);
    return out;
}

double parse_double(const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size() || s.empty()) throw ArgumentError("not a number: '" + s + "'");
    return v;
}

std::vector<double> resolve_grid(const Options& o) {
    if (!o.eb_grid.empty()) {
        std::vector<double> g;
        for (const auto& s : split_list(o.eb_grid)) g.push_back(parse_double(s));
        validate_eb_grid(g);
        return g;
    }
    if (!o.eb_range.empty()) {
        const auto parts = split_list(o.eb_range);
        if (parts.size() != 2) throw ArgumentError("--eb-range expects lo,hi");
        return eb_grid_logspace(parse_double(parts[0]), parse_double(parts[1]), o.eb_points);
    }
    return eb_preset(o.eb_preset, o.eb_points);
}

std::vector<CodecId> resolve_codecs(const std::string& text) {
    std::vector<CodecId> out;
    for (const auto& s : split_list(text)) out.push_back(parse_codec(s));
    if (out.empty()) throw ArgumentError("no codecs given");
    return out;
}

BackboneConfig resolve_backbone(const Options& o, Dims3 block_dims) {
    BackboneConfig c;
    c.stem_channels = o.stem_channels;
    c.feature_dim = o.feature_dim;
    c.block_dims = block_dims;
    c.stages.clear();
    for (const auto& s : split_list(o.stages)) {
        const auto x = s.find('x');
        if (x == std::string::npos) throw ArgumentError("stage '" + s + "' is not <blocks>x<channels>");
        try {
            c.stages.push_back({std::stoul(s.substr(0, x)), std::stoul(s.substr(x + 1))});
        } catch (const std::exception&) {
            throw ArgumentError("stage '" + s + "' is not <blocks>x<channels>");
        }
    }
    c.validate();
    return c;
}

TrainSchedule resolve_schedule(TrainSchedule s, const Options& o) {
    if (o.epochs > 0) s.epochs = o.epochs;
    if (o.batch > 0) s.batch = o.batch;
    s.lr = o.lr;
    s.seed = o.seed;
    return s;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f || !(f << text)) throw IoError("cannot write '" + path.string() + "'");
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

std::string loss_csv(const std::vector<double>& loss) {
    std::string out = "epoch,loss\n";
    for (std::size_t i = 0; i < loss.size(); ++i) out += std::to_string(i) + "," + format_real(loss[i]) + "\n";
    return out;
}

// Resolved configuration: every option of the subcommand with its effective value.
json echo_config(const CLI::App& sub, const std::map<std::string, std::string>& resolved) {
    json opts = json::object();
    for (const auto* opt : sub.get_options()) {
        const auto name = opt->get_single_name();
        if (name == "help" || name == "config" || name.empty()) continue;
        if (opt->get_expected_min() == 0) {
            opts[name] = opt->count() > 0;
            continue;
        }
        const auto& res = opt->results();
        opts[name] = res.empty() ? opt->get_default_str() : res.back();
    }
    for (const auto& [k, v] : resolved) opts[k] = v;
    return {{"subcommand", sub.get_name()}, {"options", opts}};
}

// Turns --config <file> into argv tokens placed before the explicit flags, so
// explicit flags win.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
    std::vector<std::string> out;
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            path = args[++i];
            continue;
        }
        if (args[i].starts_with("--config=")) {
            path = args[i].substr(9);
            continue;
        }
        out.push_back(args[i]);
    }
    if (path.empty() || out.empty()) return args;
    std::ifstream f(path);
    if (!f) throw IoError("cannot read config '" + path + "'");
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw FormatError("config '" + path + "' is not valid JSON: " + e.what());
    }
    if (j.contains("subcommand") && j["subcommand"].get<std::string>() != out.front())
        throw ArgumentError("config is for '" + j["subcommand"].get<std::string>() + "', not '" + out.front() + "'");
    const json& opts = j.contains("options") ? j["options"] : j;
    std::vector<std::string> injected;
    for (const auto& [k, v] : opts.items()) {
        if (v.is_boolean()) {
            if (v.get<bool>()) injected.push_back("--" + k);
            continue;
        }
        if (v.is_string() && v.get<std::string>().empty()) continue;
        injected.push_back("--" + k);
        injected.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    }
    out.insert(out.begin() + 1, injected.begin(), injected.end());
    return out;
}

struct Split {
    Dataset data;
    LabelTable train, test;
};

Split load_split(const Options& o) {
    Split s{Dataset::load(o.manifest), {}, {}};
    auto table = read_label_table(o.labels);
    std::tie(s.train, s.test) = split(table, {parse_split_mode(o.split)});
    return s;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"deepcq: compression-quality surrogate toolkit", "deepcq"};
    app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);

    auto common = [&](CLI::App* sub, bool outdir_required = true) {
        sub->add_option("--seed", o.seed, "base seed for every random stream")->envname("DCQ_SEED");
        auto* od = sub->add_option("--outdir", o.outdir, "output directory");
        if (outdir_required) od->required();
        sub->add_option("--config", o.config, "JSON config (an echoed config.json works)");
    };
    auto grid_opts = [&](CLI::App* sub) {
        sub->add_option("--eb-preset", o.eb_preset, "named eb range: nyx, hurricane, miranda, rtm");
        sub->add_option("--eb-range", o.eb_range, "custom log-uniform range lo,hi");
        sub->add_option("--eb-grid", o.eb_grid, "explicit comma-separated eb list");
        sub->add_option("--eb-points", o.eb_points, "points in a preset or range grid");
    };
    auto split_opts = [&](CLI::App* sub) {
        sub->add_option("--manifest", o.manifest, "dataset manifest")->required();
        sub->add_option("--labels", o.labels, "label CSV")->required();
        sub->add_option("--split", o.split, "odd_even or last_timestep_out");
    };
    auto train_opts = [&](CLI::App* sub) {
        sub->add_option("--epochs", o.epochs, "epochs (0: preset default)");
        sub->add_option("--lr", o.lr, "initial learning rate");
        sub->add_option("--batch", o.batch, "batch size (0: preset default)");
        sub->add_flag("--desk", o.desk, "shorter desk-scale schedule");
    };

    auto* gen = app.add_subcommand("gen-synthetic", "write a seeded synthetic dataset and manifest");
    common(gen);
    gen->add_option("--dims", o.dims, "volume dims nx,ny,nz");
    gen->add_option("--timesteps", o.timesteps, "timesteps per field");
    gen->add_option("--fields", o.fields, "comma-separated field names");
    gen->add_option("--modes", o.modes, "sinusoidal modes");
    gen->add_option("--max-frequency", o.max_frequency, "largest mode frequency");
    gen->add_option("--noise", o.noise, "noise amplitude relative to total mode amplitude");
    gen->add_option("--drift", o.drift, "per-timestep drift");

    auto* lab = app.add_subcommand("label", "ground-truth CR/PSNR/SSIM labels for sampled blocks");
    common(lab);
    lab->add_option("--manifest", o.manifest, "dataset manifest")->required();
    lab->add_option("--codecs", o.codecs, "comma-separated codecs");
    grid_opts(lab);
    lab->add_option("--block-dims", o.block_dims, "block dims");
    lab->add_option("--blocks", o.blocks, "blocks per (field, timestep)");
    lab->add_option("--workers", o.workers, "label workers (0: all cores)");

    auto* tb = app.add_subcommand("train-backbone", "phase 1: shared feature backbone");
    common(tb);
    split_opts(tb);
    train_opts(tb);
    tb->add_option("--stem-channels", o.stem_channels, "stem conv channels");
    tb->add_option("--stages", o.stages, "residual stages as <blocks>x<channels>,...");
    tb->add_option("--feature-dim", o.feature_dim, "feature vector length");

    auto* th = app.add_subcommand("train-head", "phase 2: per-(codec, metric) heads on a frozen backbone");
    common(th);
    split_opts(th);
    train_opts(th);
    th->add_option("--model", o.model, "model file holding the backbone")->required();
    th->add_option("--codec", o.codec, "codec (empty: every codec in the labels)");
    th->add_option("--metric", o.metric, "metric (empty: every metric)");
    th->add_option("--kind", o.kind, "head kind: moe or mlp");

    auto* pr = app.add_subcommand("predict", "predict one metric for a raw volume at one error bound");
    common(pr, false);
    pr->add_option("--model", o.model, "model file")->required();
    pr->add_option("--codec", o.codec, "codec")->required();
    pr->add_option("--metric", o.metric, "metric")->required();
    pr->add_option("--eb", o.eb, "relative error bound")->required();
    pr->add_option("--input", o.input, "raw little-endian float32 volume")->required();
    pr->add_option("--dims", o.dims, "volume dims nx,ny,nz");
    pr->add_option("--blocks", o.blocks, "blocks averaged into the prediction");

    auto* ev = app.add_subcommand("eval", "PE/MAPE of a model on the test split");
    common(ev);
    split_opts(ev);
    ev->add_option("--model", o.model, "model file")->required();
    ev->add_option("--granularity", o.granularity, "block or field");
    ev->add_option("--field-blocks", o.field_blocks, "fresh blocks per test volume at field granularity");

    auto* ab = app.add_subcommand("ablate-moe", "plain MLP vs MoE heads on the same backbone");
    common(ab);
    split_opts(ab);
    train_opts(ab);
    ab->add_option("--model", o.model, "model file holding the backbone")->required();

    auto* ts = app.add_subcommand("time-sweep", "cumulative ground-truth vs surrogate time over an eb grid");
    common(ts);
    ts->add_option("--model", o.model, "model file")->required();
    ts->add_option("--input", o.input, "raw little-endian float32 volume")->required();
    ts->add_option("--dims", o.dims, "volume dims nx,ny,nz");
    ts->add_option("--codec", o.codec, "codec")->required();
    ts->add_option("--metric", o.metric, "metric");
    grid_opts(ts);
    ts->add_option("--repetitions", o.repetitions, "repetitions (medians reported)");
    ts->add_option("--blocks", o.blocks, "blocks for the surrogate path");

    auto* in = app.add_subcommand("inspect-model", "print model metadata");
    common(in, false);
    in->add_option("--model", o.model, "model file")->required();

    std::vector<std::string> args;
    try {
        args = expand_config(raw_args);
    } catch (const Error& e) {
        err << "error: category=" << e.category() << " message=" << json(std::string(e.what())).dump() << "\n";
        return 1;
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: category=usage message=" << json(std::string(e.what())).dump() << "\n";
        return 2;
    }

    try {
        std::map<std::string, std::string> resolved;
        CLI::App* sub = app.get_subcommands().front();
        const fs::path outdir = o.outdir;
        if (!o.outdir.empty()) ensure_dir(outdir);

        if (sub == gen) {
            SyntheticSpec spec;
            spec.dims = parse_dims(o.dims);
            spec.seed = o.seed;
            spec.n_modes = o.modes;
            spec.max_frequency = o.max_frequency;
            spec.noise_amplitude = o.noise;
            spec.drift = o.drift;
            const auto fields = split_list(o.fields);
            if (fields.empty()) throw ArgumentError("no field names given");
            Dataset::synthetic(spec, o.timesteps, fields).write(outdir);
            out << (outdir / "manifest.json").string() << "\n";
        } else if (sub == lab) {
            const auto data = Dataset::load(o.manifest);
            const auto grid = resolve_grid(o);
            BlockSpec bs{parse_dims(o.block_dims), o.blocks};
            const auto table = build_labels(data, resolve_codecs(o.codecs), grid, bs, o.seed, o.workers);
            write_label_table(outdir / "labels.csv", table);
            out << (outdir / "labels.csv").string() << "\n";
        } else if (sub == tb) {
            const auto s = load_split(o);
            const auto train = assemble_training_set(s.data, s.train);
            const auto sched = resolve_schedule(phase1_defaults(o.desk), o);
            resolved["epochs"] = std::to_string(sched.epochs);
            resolved["batch"] = std::to_string(sched.batch);
            auto r = train_backbone(train, resolve_backbone(o, train.block_dims), sched);
            SurrogateModel model(std::move(r.backbone));
            model.training_seed = o.seed;
            save_model(model, outdir / "backbone.dcqm");
            write_text(outdir / "backbone_loss.csv", loss_csv(r.loss));
            out << (outdir / "backbone.dcqm").string() << "\n";
        } else if (sub == th) {
            const auto s = load_split(o);
            const auto train = assemble_training_set(s.data, s.train);
            auto model = load_model(o.model);
            const auto sched = resolve_schedule(phase2_defaults(o.desk), o);
            resolved["epochs"] = std::to_string(sched.epochs);
            resolved["batch"] = std::to_string(sched.batch);
            const auto kind = parse_head_kind(o.kind);
            std::vector<HeadKey> keys;
            for (const auto& k : available_heads(train.rows))
                if ((o.codec.empty() || k.codec == parse_codec(o.codec)) &&
                    (o.metric.empty() || k.metric == parse_metric(o.metric)))
                    keys.push_back(k);
            if (keys.empty()) throw DataError("no labels match the requested codec/metric");
            const auto hash = model.backbone_hash();
            for (const auto& k : keys) {
                auto r = train_head(model.backbone(), train, k, default_head_config(k.metric, kind), sched);
                write_text(outdir / ("head_" + k.name() + "_loss.csv"), loss_csv(r.loss));
                model.set_head(k, std::move(r.head));
            }
            if (model.backbone_hash() != hash) throw StateError("backbone changed during head training");
            save_model(model, outdir / "model.dcqm");
            out << (outdir / "model.dcqm").string() << "\n";
        } else if (sub == pr) {
            const auto model = load_model(o.model);
            const HeadKey key{parse_codec(o.codec), parse_metric(o.metric)};
            const auto field = load_raw(o.input, parse_dims(o.dims));
            const double prediction = predict_volume(model, field, key, o.eb, o.blocks, o.seed);
            const json j{{"codec", codec_name(key.codec)},
                         {"metric", metric_name(key.metric)},
                         {"eb_rel", o.eb},
                         {"blocks", o.blocks},
                         {"prediction", prediction}};
            out << j.dump() << "\n";
            if (!o.outdir.empty()) write_text(outdir / "prediction.json", j.dump(2) + "\n");
        } else if (sub == ev) {
            const auto s = load_split(o);
            const auto model = load_model(o.model);
            EvalConfig cfg{parse_granularity(o.granularity), o.field_blocks, o.seed};
            const auto report = evaluate(model, s.data, s.test, cfg);
            write_eval_outputs(report, outdir);
            for (const auto& r : report.mape)
                out << codec_name(r.codec) << " " << metric_name(r.metric) << " " << r.field
                    << " mape=" << format_real(r.mape) << "\n";
        } else if (sub == ab) {
            const auto s = load_split(o);
            const auto train = assemble_training_set(s.data, s.train);
            const auto model = load_model(o.model);
            const auto sched = resolve_schedule(phase2_defaults(o.desk), o);
            resolved["epochs"] = std::to_string(sched.epochs);
            resolved["batch"] = std::to_string(sched.batch);
            const auto rows = ablation_moe(model.backbone(), train, s.data, s.test, sched);
            write_text(outdir / "ablation.csv", ablation_to_csv(rows));
            out << ablation_to_csv(rows);
        } else if (sub == ts) {
            const auto field = load_raw(o.input, parse_dims(o.dims));
            TimingConfig cfg;
            cfg.key = {parse_codec(o.codec), o.metric.empty() ? Metric::CR : parse_metric(o.metric)};
            resolved["metric"] = std::string(metric_name(cfg.key.metric));
            cfg.eb_grid = resolve_grid(o);
            cfg.blocks = o.blocks;
            cfg.repetitions = o.repetitions;
            cfg.seed = o.seed;
            (void)load_model(o.model).head(cfg.key);
            const auto r = timing_sweep(field, o.model, cfg);
            write_text(outdir / "timing.csv", timing_to_csv(r));
            out << json{{"gt_per_eb_s", r.gt_per_eb}, {"surrogate_incremental_s", r.surrogate_incremental}}.dump()
                << "\n";
        } else if (sub == in) {
            out << json::parse(read_model_metadata(o.model)).dump(2) << "\n";
        }

        if (!o.outdir.empty()) write_text(outdir / "config.json", echo_config(*sub, resolved).dump(2) + "\n");
        return 0;
    } catch (const Error& e) {
        err << "error: category=" << e.category() << " message=" << json(std::string(e.what())).dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: category=internal message=" << json(std::string(e.what())).dump() << "\n";
        return 1;
    }
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace deepcq::cli
