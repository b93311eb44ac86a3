// rfrl: train, evaluate, ablate, gradient-check and explain from the shell.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "rfrl/explain.hpp"
#include "rfrl/gradcheck.hpp"
#include "rfrl/harness.hpp"

namespace fs = std::filesystem;
using namespace rfrl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitContract = 1;
constexpr int kExitNumeric = 2;

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t pos = 0;
            out.push_back(std::stoull(item, &pos));
            if (pos != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("bad seed '" + item + "' in --seeds");
        }
    }
    if (out.empty()) throw ConfigError("--seeds needs at least one seed");
    return out;
}

ExperimentConfig load_with_overrides(const std::string& path, const std::vector<std::string>& sets) {
    ExperimentConfig cfg = load_config(path);
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

void write_heatmap_files(const Heatmap<float>& hm, const ModelConfig& cfg, const std::string& stem) {
    save_tensor(stem + ".rft", hm.values);
    const Tensor<float> up = resize_bilinear(hm.values, cfg.height, cfg.width);
    GrayImage img;
    img.height = cfg.height;
    img.width = cfg.width;
    img.pixels.resize(up.size());
    for (std::size_t i = 0; i < up.size(); ++i) {
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(up[i], 0.0f, 1.0f) * 255.0f));
    }
    write_pgm(stem + ".pgm", img);
}

int cmd_train(const std::string& config, std::optional<std::uint64_t> seed, std::optional<std::string> out,
              const std::vector<std::string>& sets) {
    ExperimentConfig cfg = load_with_overrides(config, sets);
    if (seed) cfg.seed = *seed;
    if (out) cfg.out_dir = *out;
    cfg.validate();
    const DataSplits data = build_data(cfg);
    TrainOptions opts;
    opts.out_dir = cfg.out_dir;
    opts.on_epoch = [&](const EpochRecord& e) {
        std::fprintf(stderr, "epoch %3zu lr=%.2e train_loss=%.5f train_acc=%.3f val_loss=%.5f val_acc=%.3f%s\n",
                     e.epoch, e.lr, e.train.total, e.train_acc, e.val.total, e.val_acc, e.best ? " *" : "");
    };
    if (cfg.data.split == "kfold") {
        const auto outcomes = train_kfold(cfg, data, opts);
        std::cout << kMetricsCsvHeader << '\n';
        for (std::size_t f = 0; f < outcomes.size(); ++f) {
            for (const auto& [split, m] : outcomes[f].record.final_metrics) {
                write_metrics_row(std::cout, "seed-" + std::to_string(cfg.seed) + "-fold-" + std::to_string(f), split,
                                  m);
            }
        }
        return kExitOk;
    }
    const TrainOutcome o = train_run(cfg, data, opts);
    std::cout << kMetricsCsvHeader << '\n';
    for (const auto& [split, m] : o.record.final_metrics) {
        write_metrics_row(std::cout, "seed-" + std::to_string(cfg.seed), split, m);
    }
    return kExitOk;
}

int cmd_eval(const std::string& ckpt_path, const std::string& split) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const DataSplits data = build_data(ckpt.config);
    const Dataset& ds = split_by_name(data, split);
    if (ds.size() == 0) throw ConfigError("split '" + split + "' is empty for this configuration");
    const EvalResult r = evaluate(ckpt.model, ds, ckpt.config.model.loss_switches, ckpt.config.frs_norm, false);
    for (const auto& w : r.metrics.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << kMetricsCsvHeader << '\n';
    write_metrics_row(std::cout, "seed-" + std::to_string(ckpt.config.seed), split, r.metrics);
    return kExitOk;
}

int cmd_ablate(const std::string& config, const std::string& seeds, std::optional<std::string> out,
               const std::vector<std::string>& sets) {
    ExperimentConfig cfg = load_with_overrides(config, sets);
    const std::string out_dir = out.value_or((fs::path(cfg.out_dir) / "ablation").string());
    const AblationResult res =
        run_ablation(cfg, parse_seed_list(seeds), out_dir, [](const std::string& line) { std::cerr << line << '\n'; });
    write_ablation_csv(std::cout, res);
    std::cerr << res.summary_csv;
    return kExitOk;
}

int cmd_gradcheck(std::size_t seeds) {
    GradcheckOptions opts;
    opts.seeds = seeds;
    const auto results = run_gradcheck(default_gradcheck_cases(), opts);
    bool ok = true;
    std::cout << "op,max_rel_err,checked,skipped,status\n";
    for (const auto& r : results) {
        char err[32];
        std::snprintf(err, sizeof(err), "%.3e", r.max_rel_err);
        std::cout << r.op << ',' << err << ',' << r.checked << ',' << r.skipped << ','
                  << (r.passed ? "pass" : "FAIL") << '\n';
        if (!r.error.empty()) std::cerr << r.op << ": " << r.error << '\n';
        ok = ok && r.passed;
    }
    return ok ? kExitOk : kExitNumeric;
}

int cmd_gradcam(const std::string& ckpt_path, const std::string& input, std::size_t cls, const std::string& stage_s,
                const std::string& method, const std::string& out_dir) {
    const CamStage stage = parse_cam_stage(stage_s);
    if (method != "cam" && method != "campp" && method != "all") {
        throw ContractError("unknown method '" + method + "' (expected cam, campp or all)");
    }
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const Tensor<float> x = load_model_input(input, ckpt.config.model);
    fs::create_directories(out_dir);
    std::cout << "method,stage,class,height,width,file\n";
    auto emit = [&](CamMethod m, const char* tag) {
        const Heatmap<float> hm = class_activation_map(ckpt.model, x, cls, stage, m);
        const std::string stem =
            (fs::path(out_dir) / (std::string(tag) + "_stage-" + to_string(stage) + "_class-" + std::to_string(cls)))
                .string();
        write_heatmap_files(hm, ckpt.config.model, stem);
        std::cout << tag << ',' << to_string(stage) << ',' << cls << ',' << hm.values.dim(0) << ','
                  << hm.values.dim(1) << ',' << stem << ".rft\n";
    };
    if (method == "cam" || method == "all") emit(CamMethod::gradcam, "gradcam");
    if (method == "campp" || method == "all") emit(CamMethod::gradcam_pp, "gradcampp");
    return kExitOk;
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir) {
    const SynthFileSpec s = parse_synth_spec(read_text_file(spec_path));
    const Dataset ds = synth_generate(s.spec, s.seed);
    export_dataset(ds, out_dir);
    std::cout << "class,count\n";
    std::vector<std::size_t> counts(ds.num_classes, 0);
    for (auto l : ds.labels()) ++counts[l];
    for (std::size_t c = 0; c < ds.num_classes; ++c) std::cout << ds.class_names[c] << ',' << counts[c] << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rfrl: encoder-decoder classifier with feature similarity training"};
    app.require_subcommand(1);

    std::string config, ckpt, split, seeds, input, stage, method = "all", spec, out_dir = ".";
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::vector<std::string> sets;
    std::size_t cls = 0, gc_seeds = 20;

    auto* train = app.add_subcommand("train", "train one model");
    train->add_option("--config", config, "config file")->required();
    train->add_option("--seed", seed, "override the run seed");
    train->add_option("--out", out, "output directory");
    train->add_option("--set", sets, "override a config key (key=value)");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--ckpt", ckpt, "checkpoint")->required();
    eval->add_option("--split", split, "train, val, test or ood")
        ->required()
        ->check(CLI::IsMember({"train", "val", "test", "ood"}));

    auto* ablate = app.add_subcommand("ablate", "baseline / decoder / full model comparison");
    ablate->add_option("--config", config, "config file")->required();
    ablate->add_option("--seeds", seeds, "comma-separated seeds")->required();
    ablate->add_option("--out", out, "output directory");
    ablate->add_option("--set", sets, "override a config key (key=value)");

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    gradcheck->add_option("--seeds", gc_seeds, "random seeds per op")->check(CLI::PositiveNumber);

    auto* gradcam = app.add_subcommand("gradcam", "class activation heatmaps");
    gradcam->add_option("--ckpt", ckpt, "checkpoint")->required();
    gradcam->add_option("--input", input, "image (.pgm or .rft)")->required();
    gradcam->add_option("--class", cls, "class index")->required();
    gradcam->add_option("--stage", stage, "n, n-1 or n-2")->required();
    gradcam->add_option("--method", method, "cam, campp or all");
    gradcam->add_option("--out", out_dir, "output directory");

    auto* synth = app.add_subcommand("synth", "write a synthetic dataset as PGM files");
    synth->add_option("--spec", spec, "synthetic spec file")->required();
    synth->add_option("--out", out_dir, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitContract;
    }

    try {
        if (*train) return cmd_train(config, seed, out, sets);
        if (*eval) return cmd_eval(ckpt, split);
        if (*ablate) return cmd_ablate(config, seeds, out, sets);
        if (*gradcheck) return cmd_gradcheck(gc_seeds);
        if (*gradcam) return cmd_gradcam(ckpt, input, cls, stage, method, out_dir);
        if (*synth) return cmd_synth(spec, out_dir);
    } catch (const NumericsError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitContract;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitContract;
    }
    return kExitContract;
}
