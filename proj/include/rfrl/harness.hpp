#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "rfrl/checkpoint.hpp"
#include "rfrl/metrics.hpp"

namespace rfrl {

struct DataSplits {
    Dataset train;
    Dataset val;
    Dataset test;
    Dataset ood;
};

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices);

/// Builds train/val/test (in-distribution) and the shifted OOD set.
DataSplits build_data(const ExperimentConfig& cfg);

/// Named split of build_data's result: train, val, test or ood.
const Dataset& split_by_name(const DataSplits& d, const std::string& name);

struct LossTotals {
    double l_sup = 0.0;
    double l_un = 0.0;
    double l_frs = 0.0;
    double total = 0.0;
};

struct EvalResult {
    ConfusionMatrix cm;
    Metrics metrics;
    LossTotals losses;  // sample-weighted means; disabled heads are 0
    std::vector<std::size_t> predictions;
};

/// Forward-only pass over a dataset. With `with_losses` false only the
/// classifier runs.
EvalResult evaluate(const RfrlModel<float>& model, const Dataset& ds, const LossSwitches& switches, FrsNorm norm,
                    bool with_losses = true);

struct EpochRecord {
    std::size_t epoch = 0;
    double lr = 0.0;  // rate used during the epoch
    LossTotals train;
    double train_acc = 0.0;       // running accuracy on the (augmented) training batches
    double train_eval_acc = -1;   // full training-set accuracy when requested, else -1
    LossTotals val;
    double val_acc = 0.0;
    bool best = false;
};

struct RunRecord {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    std::vector<std::pair<std::string, Metrics>> final_metrics;  // split -> metrics of the best model
    double wall_seconds = 0.0;
};

inline constexpr const char* kRunCsvHeader =
    "epoch,lr,train_l_sup,train_l_un,train_l_frs,train_total,train_acc,train_eval_acc,"
    "val_l_sup,val_l_un,val_l_frs,val_total,val_acc,best";
void write_run_csv(std::ostream& os, const RunRecord& rec);

struct TrainOptions {
    std::string out_dir;  // empty: write nothing
    std::string run_id;   // defaults to "seed-<seed>"
    std::function<void(const EpochRecord&)> on_epoch;
    /// Splits evaluated with the best model at the end.
    std::vector<std::string> final_splits{"train", "val", "test", "ood"};
};

struct TrainOutcome {
    RfrlModel<float> best_model;
    RunRecord record;
    Checkpoint checkpoint;  // best-validation state
};

/// Seeded loop: shuffle, augment, forward, loss, backward, Adam; plateau
/// schedule and best-validation selection once per epoch. With an out_dir,
/// writes model.ckpt (on every new best), run.csv, metrics.csv, timing.csv.
TrainOutcome train_run(const ExperimentConfig& cfg, const DataSplits& data, const TrainOptions& opts = {});

/// k-fold reporting mode: the pooled train+val set is dealt into k folds and
/// each fold serves once as the validation split.
std::vector<TrainOutcome> train_kfold(const ExperimentConfig& cfg, const DataSplits& data, const TrainOptions& opts);

struct AblationVariant {
    std::string name;
    LossSwitches switches;
};
/// Classifier-only baseline, classifier + decoder, full model.
std::vector<AblationVariant> ablation_variants();

struct AblationRow {
    std::string variant;
    std::uint64_t seed = 0;
    std::string split;
    Metrics metrics;
    Metrics delta;  // minus the baseline on the same seed and split
};

inline constexpr const char* kAblationCsvHeader =
    "variant,seed,split,accuracy,sensitivity,specificity,delta_accuracy,delta_sensitivity,delta_specificity";
inline constexpr const char* kAblationSummaryHeader =
    "variant,split,seeds,median_accuracy,median_sensitivity,median_specificity,median_delta_accuracy";

struct AblationResult {
    std::vector<AblationRow> rows;  // variant-major, then seed, then split (test, ood)
    std::string summary_csv;
};

double median(std::vector<double> v);

/// Trains every variant for every seed on identical data and seeds.
AblationResult run_ablation(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds,
                            const std::string& out_dir, const std::function<void(const std::string&)>& log = {});
void write_ablation_csv(std::ostream& os, const AblationResult& res);

/// Loads a .pgm or .rft image and conforms it to the model input [1, C, H, W].
Tensor<float> load_model_input(const std::string& path, const ModelConfig& cfg);

}  // namespace rfrl
