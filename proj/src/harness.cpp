#include "rfrl/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

namespace rfrl {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kEvalBatch = 32;
constexpr std::uint64_t kShuffleStream = 0x5A11;
constexpr std::uint64_t kAugmentStream = 0xA06;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.8g", v);
    return buf;
}

std::vector<std::size_t> iota(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

std::size_t argmax_row(const Tensor<float>& probs, std::size_t row) {
    const std::size_t c = probs.dim(1);
    const float* p = probs.data().data() + row * c;
    return static_cast<std::size_t>(std::max_element(p, p + c) - p);
}

std::map<std::string, Tensor<float>*> param_map(RfrlModel<float>& m) {
    std::map<std::string, Tensor<float>*> out;
    m.visit([&](const std::string& name, Tensor<float>& t) { out.emplace(name, &t); });
    return out;
}

void check_input_shape(const Dataset& ds, const ModelConfig& cfg) {
    for (const auto& s : ds.samples) {
        if (s.image.shape() != Shape{cfg.in_channels, cfg.height, cfg.width}) {
            throw ConfigError("data image shape " + shape_str(s.image.shape()) + " does not match model input [" +
                              std::to_string(cfg.in_channels) + ", " + std::to_string(cfg.height) + ", " +
                              std::to_string(cfg.width) + "]");
        }
        if (s.label >= cfg.num_classes) {
            throw ConfigError("data has label " + std::to_string(s.label) + " but the model has " +
                              std::to_string(cfg.num_classes) + " classes");
        }
    }
}

}  // namespace

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices) {
    Dataset out;
    out.num_classes = ds.num_classes;
    out.class_names = ds.class_names;
    out.samples.reserve(indices.size());
    for (auto i : indices) out.samples.push_back(ds.samples.at(i));
    return out;
}

DataSplits build_data(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::uint64_t seed = cfg.data_seed();
    DataSplits d;
    if (cfg.data.source == "synthetic") {
        const std::size_t c = cfg.model.num_classes;
        const DataConfig& dc = cfg.data;
        const Dataset pool = synth_generate(cfg.synthetic_spec(Shift::none, (dc.n_train + dc.n_val + dc.n_test) / c), seed);
        const auto parts = split_counts(pool.labels(), {dc.n_train, dc.n_val, dc.n_test}, seed);
        d.train = subset(pool, parts[0]);
        d.val = subset(pool, parts[1]);
        d.test = subset(pool, parts[2]);
        if (dc.n_ood > 0) {
            d.ood = synth_generate(cfg.synthetic_spec(Shift::ood, dc.n_ood / c), seed);
        } else {
            d.ood.num_classes = c;
            d.ood.class_names = pool.class_names;
        }
    } else {
        const Dataset pool = load_dataset(cfg.data.path, cfg.model.height, cfg.model.in_channels);
        if (pool.num_classes != cfg.model.num_classes) {
            throw ConfigError(cfg.data.path + " has " + std::to_string(pool.num_classes) +
                              " classes, model.num_classes is " + std::to_string(cfg.model.num_classes));
        }
        const auto parts = split(pool.labels(), Holdout{}, seed);
        d.train = subset(pool, parts[0]);
        d.val = subset(pool, parts[1]);
        d.test = subset(pool, parts[2]);
        if (!cfg.data.ood_path.empty()) {
            d.ood = load_dataset(cfg.data.ood_path, cfg.model.height, cfg.model.in_channels);
        } else {
            d.ood.num_classes = pool.num_classes;
            d.ood.class_names = pool.class_names;
        }
    }
    for (const Dataset* ds : {&d.train, &d.val, &d.test, &d.ood}) check_input_shape(*ds, cfg.model);
    return d;
}

const Dataset& split_by_name(const DataSplits& d, const std::string& name) {
    if (name == "train") return d.train;
    if (name == "val") return d.val;
    if (name == "test") return d.test;
    if (name == "ood") return d.ood;
    throw ContractError("unknown split '" + name + "' (expected train, val, test or ood)");
}

EvalResult evaluate(const RfrlModel<float>& model, const Dataset& ds, const LossSwitches& switches, FrsNorm norm,
                    bool with_losses) {
    check_input_shape(ds, model.config);
    EvalResult res;
    const std::size_t n = ds.size();
    res.predictions.reserve(n);
    const bool decoder = with_losses && switches.needs_decoder();
    for (std::size_t start = 0; start < n; start += kEvalBatch) {
        const std::size_t end = std::min(n, start + kEvalBatch);
        std::vector<std::size_t> idx(end - start);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
        auto [x, y] = make_batch<float>(ds, idx);
        Tape<float> tape;
        ForwardTaps<float> taps =
            forward(model, tape, x, ForwardOptions{.track_param_grads = false, .with_decoder = decoder});
        for (std::size_t b = 0; b < idx.size(); ++b) res.predictions.push_back(argmax_row(taps.probs.value(), b));
        if (with_losses) {
            const LossReport<float> rep = total_loss(taps, tape.constant(y), switches, norm);
            const double w = static_cast<double>(idx.size());
            res.losses.l_sup += rep.l_sup * w;
            res.losses.l_un += rep.l_un * w;
            res.losses.l_frs += rep.l_frs * w;
            res.losses.total += rep.total_value * w;
        }
    }
    if (n > 0) {
        const double inv = 1.0 / static_cast<double>(n);
        res.losses.l_sup *= inv;
        res.losses.l_un *= inv;
        res.losses.l_frs *= inv;
        res.losses.total *= inv;
    }
    res.cm = confusion(res.predictions, ds.labels(), model.config.num_classes);
    if (n > 0) res.metrics = metrics(res.cm);
    return res;
}

void write_run_csv(std::ostream& os, const RunRecord& rec) {
    os << kRunCsvHeader << '\n';
    for (const auto& e : rec.epochs) {
        os << e.epoch << ',' << fmt(e.lr) << ',' << fmt(e.train.l_sup) << ',' << fmt(e.train.l_un) << ','
           << fmt(e.train.l_frs) << ',' << fmt(e.train.total) << ',' << fmt(e.train_acc) << ','
           << (e.train_eval_acc >= 0 ? fmt(e.train_eval_acc) : std::string()) << ',' << fmt(e.val.l_sup) << ','
           << fmt(e.val.l_un) << ',' << fmt(e.val.l_frs) << ',' << fmt(e.val.total) << ',' << fmt(e.val_acc) << ','
           << (e.best ? 1 : 0) << '\n';
    }
}

TrainOutcome train_run(const ExperimentConfig& cfg, const DataSplits& data, const TrainOptions& opts) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const LossSwitches sw = cfg.model.loss_switches;
    const std::string run_id = opts.run_id.empty() ? "seed-" + std::to_string(cfg.seed) : opts.run_id;
    if (data.train.size() < cfg.batch_size) throw ConfigError("training set smaller than one batch");
    check_input_shape(data.train, cfg.model);

    RfrlModel<float> model = build_model<float>(cfg.model, cfg.seed);
    AdamState<float> adam = AdamState<float>::from_config(cfg.adam);
    PlateauState plateau;
    plateau.config = cfg.plateau;
    double lr = cfg.adam.lr;
    Rng shuffle_rng = Rng::derive(cfg.seed, kShuffleStream);
    Rng aug_rng = Rng::derive(cfg.seed, kAugmentStream);
    const ForwardOptions fwd{.track_param_grads = true, .with_decoder = sw.needs_decoder()};
    const std::string ckpt_path = opts.out_dir.empty() ? "" : (fs::path(opts.out_dir) / "model.ckpt").string();
    if (!opts.out_dir.empty()) fs::create_directories(opts.out_dir);

    TrainOutcome out;
    auto params = param_map(model);
    const bool has_val = data.val.size() > 0;
    double best_acc = -1.0, best_loss = std::numeric_limits<double>::infinity();
    const std::size_t steps = data.train.size() / cfg.batch_size;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        std::vector<std::size_t> order = iota(data.train.size());
        shuffle_rng.shuffle(order);
        std::size_t correct = 0;
        for (std::size_t step = 0; step < steps; ++step) {
            std::vector<Sample> batch;
            batch.reserve(cfg.batch_size);
            for (std::size_t b = 0; b < cfg.batch_size; ++b) {
                const Sample& s = data.train.samples[order[step * cfg.batch_size + b]];
                batch.push_back(cfg.augment ? augment(s, cfg.aug, aug_rng) : s);
            }
            auto [x, y] = make_batch<float>(batch, cfg.model.num_classes);
            Tape<float> tape;
            ForwardTaps<float> taps = forward(model, tape, x, fwd);
            const LossReport<float> rep = total_loss(taps, tape.constant(y), sw, cfg.frs_norm);
            const Gradients<float> grads = tape.backward(rep.total);
            std::map<std::string, Tensor<float>> g;
            for (const auto& [name, var] : taps.params) {
                if (const Tensor<float>* t = grads.find(var.id())) g.emplace(name, *t);
            }
            adam.lr = lr;
            adam_step(params, g, adam);

            rec.train.l_sup += rep.l_sup;
            rec.train.l_un += rep.l_un;
            rec.train.l_frs += rep.l_frs;
            rec.train.total += rep.total_value;
            for (std::size_t b = 0; b < cfg.batch_size; ++b) {
                if (argmax_row(taps.probs.value(), b) == batch[b].label) ++correct;
            }
        }
        const double inv = 1.0 / static_cast<double>(steps);
        rec.train.l_sup *= inv;
        rec.train.l_un *= inv;
        rec.train.l_frs *= inv;
        rec.train.total *= inv;
        rec.train_acc = static_cast<double>(correct) / static_cast<double>(steps * cfg.batch_size);
        if (cfg.eval_train_each_epoch) {
            rec.train_eval_acc = evaluate(model, data.train, sw, cfg.frs_norm, false).metrics.accuracy;
        }

        // Validation drives both the schedule and model selection. Without a
        // validation split the training loss stands in.
        double monitor = rec.train.total, monitor_acc = rec.train_acc;
        if (has_val) {
            const EvalResult v = evaluate(model, data.val, sw, cfg.frs_norm, true);
            rec.val = v.losses;
            rec.val_acc = v.metrics.accuracy;
            monitor = v.losses.total;
            monitor_acc = v.metrics.accuracy;
        }
        if (!std::isfinite(monitor)) throw NumericsError("validation loss is not finite at epoch " + std::to_string(epoch));

        if (monitor_acc > best_acc || (monitor_acc == best_acc && monitor < best_loss)) {
            best_acc = monitor_acc;
            best_loss = monitor;
            rec.best = true;
            out.record.best_epoch = epoch;
            out.best_model = model;
            out.checkpoint.config = cfg;
            out.checkpoint.model = model;
            out.checkpoint.adam = adam;
            out.checkpoint.meta = {{"epoch", static_cast<double>(epoch)}};
        }
        std::tie(lr, plateau) = plateau_update(plateau, monitor, lr);
        if (rec.best) {
            out.checkpoint.plateau = plateau;
            if (!ckpt_path.empty()) save_checkpoint(ckpt_path, out.checkpoint);
        }

        out.record.epochs.push_back(rec);
        if (opts.on_epoch) opts.on_epoch(rec);
    }

    if (out.record.epochs.empty()) {
        out.best_model = model;
        out.checkpoint.config = cfg;
        out.checkpoint.model = model;
        out.checkpoint.adam = adam;
        out.checkpoint.plateau = plateau;
        out.checkpoint.meta = {{"epoch", 0.0}};
        if (!ckpt_path.empty()) save_checkpoint(ckpt_path, out.checkpoint);
    }

    for (const auto& split : opts.final_splits) {
        const Dataset& ds = split_by_name(data, split);
        if (ds.size() == 0) continue;
        out.record.final_metrics.emplace_back(split, evaluate(out.best_model, ds, sw, cfg.frs_norm, false).metrics);
    }
    out.record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (!opts.out_dir.empty()) {
        std::ofstream run(fs::path(opts.out_dir) / "run.csv");
        write_run_csv(run, out.record);
        std::ofstream met(fs::path(opts.out_dir) / "metrics.csv");
        met << kMetricsCsvHeader << '\n';
        for (const auto& [split, m] : out.record.final_metrics) write_metrics_row(met, run_id, split, m);
        std::ofstream timing(fs::path(opts.out_dir) / "timing.csv");
        timing << "run_id,epochs,wall_seconds\n" << run_id << ',' << out.record.epochs.size() << ','
               << fmt(out.record.wall_seconds) << '\n';
    }
    return out;
}

std::vector<TrainOutcome> train_kfold(const ExperimentConfig& cfg, const DataSplits& data, const TrainOptions& opts) {
    Dataset pool = data.train;
    pool.samples.insert(pool.samples.end(), data.val.samples.begin(), data.val.samples.end());
    const auto folds = split(pool.labels(), KFold{cfg.data.kfold}, cfg.data_seed());
    std::vector<TrainOutcome> outcomes;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<std::size_t> train_idx;
        for (std::size_t g = 0; g < folds.size(); ++g) {
            if (g != f) train_idx.insert(train_idx.end(), folds[g].begin(), folds[g].end());
        }
        std::sort(train_idx.begin(), train_idx.end());
        DataSplits fold_data{subset(pool, train_idx), subset(pool, folds[f]), data.test, data.ood};
        TrainOptions fold_opts = opts;
        const std::string base = opts.run_id.empty() ? "seed-" + std::to_string(cfg.seed) : opts.run_id;
        fold_opts.run_id = base + "-fold-" + std::to_string(f);
        if (!opts.out_dir.empty()) fold_opts.out_dir = (fs::path(opts.out_dir) / ("fold-" + std::to_string(f))).string();
        outcomes.push_back(train_run(cfg, fold_data, fold_opts));
    }
    return outcomes;
}

std::vector<AblationVariant> ablation_variants() {
    return {
        {"baseline", LossSwitches{.supervised = true, .unsupervised = false, .frs = false}},
        {"decoder", LossSwitches{.supervised = true, .unsupervised = true, .frs = false}},
        {"rfrl", LossSwitches{.supervised = true, .unsupervised = true, .frs = true}},
    };
}

double median(std::vector<double> v) {
    if (v.empty()) throw ContractError("median of an empty set");
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

AblationResult run_ablation(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds,
                            const std::string& out_dir, const std::function<void(const std::string&)>& log) {
    if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
    const auto variants = ablation_variants();
    const std::vector<std::string> splits{"test", "ood"};
    std::map<std::pair<std::string, std::uint64_t>, std::map<std::string, Metrics>> results;

    for (std::uint64_t seed : seeds) {
        ExperimentConfig base = cfg;
        base.seed = seed;
        base.validate();
        const DataSplits data = build_data(base);
        for (const auto& v : variants) {
            ExperimentConfig vc = base;
            vc.model.loss_switches = v.switches;
            TrainOptions to;
            to.run_id = v.name + "-seed-" + std::to_string(seed);
            to.final_splits = splits;
            if (!out_dir.empty()) to.out_dir = (fs::path(out_dir) / v.name / ("seed-" + std::to_string(seed))).string();
            const TrainOutcome o = train_run(vc, data, to);
            for (const auto& [split, m] : o.record.final_metrics) results[{v.name, seed}][split] = m;
            if (log) {
                char line[160];
                std::snprintf(line, sizeof(line), "%s seed=%llu best_epoch=%zu test_acc=%.4f ood_acc=%.4f (%.1fs)",
                              v.name.c_str(), static_cast<unsigned long long>(seed), o.record.best_epoch,
                              results[{v.name, seed}]["test"].accuracy, results[{v.name, seed}]["ood"].accuracy,
                              o.record.wall_seconds);
                log(line);
            }
        }
    }

    AblationResult res;
    const std::string& baseline = variants.front().name;
    for (const auto& v : variants) {
        for (std::uint64_t seed : seeds) {
            for (const auto& split : splits) {
                AblationRow row;
                row.variant = v.name;
                row.seed = seed;
                row.split = split;
                row.metrics = results[{v.name, seed}][split];
                const Metrics& b = results[{baseline, seed}][split];
                row.delta.accuracy = row.metrics.accuracy - b.accuracy;
                row.delta.sensitivity = row.metrics.sensitivity - b.sensitivity;
                row.delta.specificity = row.metrics.specificity - b.specificity;
                res.rows.push_back(row);
            }
        }
    }

    std::string summary = std::string(kAblationSummaryHeader) + "\n";
    for (const auto& v : variants) {
        for (const auto& split : splits) {
            std::vector<double> acc, sens, spec, dacc;
            for (const auto& r : res.rows) {
                if (r.variant != v.name || r.split != split) continue;
                acc.push_back(r.metrics.accuracy);
                sens.push_back(r.metrics.sensitivity);
                spec.push_back(r.metrics.specificity);
                dacc.push_back(r.delta.accuracy);
            }
            summary += v.name + "," + split + "," + std::to_string(acc.size()) + "," + fmt(median(acc)) + "," +
                       fmt(median(sens)) + "," + fmt(median(spec)) + "," + fmt(median(dacc)) + "\n";
        }
    }
    res.summary_csv = summary;

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream os(fs::path(out_dir) / "ablation.csv");
        write_ablation_csv(os, res);
        std::ofstream ss(fs::path(out_dir) / "ablation_summary.csv");
        ss << res.summary_csv;
    }
    return res;
}

void write_ablation_csv(std::ostream& os, const AblationResult& res) {
    os << kAblationCsvHeader << '\n';
    for (const auto& r : res.rows) {
        os << r.variant << ',' << r.seed << ',' << r.split << ',' << fmt(r.metrics.accuracy) << ','
           << fmt(r.metrics.sensitivity) << ',' << fmt(r.metrics.specificity) << ',' << fmt(r.delta.accuracy) << ','
           << fmt(r.delta.sensitivity) << ',' << fmt(r.delta.specificity) << '\n';
    }
}

Tensor<float> load_model_input(const std::string& path, const ModelConfig& cfg) {
    Tensor<float> plane;
    if (fs::path(path).extension() == ".pgm") {
        const GrayImage img = read_pgm(path);
        plane = Tensor<float>({img.height, img.width});
        for (std::size_t i = 0; i < img.pixels.size(); ++i) plane[i] = static_cast<float>(img.pixels[i]) / 255.0f;
    } else {
        Tensor<float> t = load_tensor<float>(path);
        if (t.rank() == 4 && t.dim(0) == 1) t = t.reshaped({t.dim(1), t.dim(2), t.dim(3)});
        if (t.rank() == 3) {
            if (t.shape() != Shape{cfg.in_channels, cfg.height, cfg.width}) {
                throw ConfigError("input " + shape_str(t.shape()) + " does not match the model input");
            }
            return t.reshaped({1, cfg.in_channels, cfg.height, cfg.width});
        }
        if (t.rank() != 2) throw ConfigError("input tensor must be [H, W], [C, H, W] or [1, C, H, W]");
        plane = t;
    }
    plane = resize_bilinear(plane, cfg.height, cfg.width);
    Tensor<float> x({1, cfg.in_channels, cfg.height, cfg.width});
    const std::size_t hw = cfg.height * cfg.width;
    for (std::size_t c = 0; c < cfg.in_channels; ++c) {
        std::copy(plane.data().begin(), plane.data().end(), x.data().begin() + static_cast<std::ptrdiff_t>(c * hw));
    }
    return x;
}

}  // namespace rfrl
