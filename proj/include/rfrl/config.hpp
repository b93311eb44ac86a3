#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rfrl/data.hpp"
#include "rfrl/losses.hpp"
#include "rfrl/model.hpp"
#include "rfrl/optim.hpp"

namespace rfrl {

struct KeyValue {
    std::string key;
    std::string value;
    std::size_t line = 0;
};

/// Splits UTF-8 `key = value` lines. '#' starts a comment; blank lines are
/// ignored. Raises ConfigError on malformed or duplicated keys.
std::vector<KeyValue> parse_key_values(std::string_view text);

std::string read_text_file(const std::string& path);

struct DataConfig {
    std::string source = "synthetic";  // synthetic | dir
    std::string path;                  // class-per-subdirectory root when source = dir
    std::string ood_path;
    std::size_t n_train = 300;
    std::size_t n_val = 60;
    std::size_t n_test = 150;
    std::size_t n_ood = 150;
    std::optional<std::uint64_t> seed;  // defaults to the run seed
    std::string split = "holdout";      // holdout | kfold
    std::size_t kfold = 5;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::string out_dir = "runs/default";
    ModelConfig model;
    FrsNorm frs_norm = FrsNorm::squared_mean;
    AdamConfig adam;
    std::size_t batch_size = 4;
    std::size_t epochs = 50;
    bool augment = true;
    bool eval_train_each_epoch = false;
    PlateauConfig plateau;
    DataConfig data;
    double synth_noise = 0.05;
    double synth_band_min = 2.0;
    double synth_band_max = 4.0;
    AugmentConfig aug;

    std::uint64_t data_seed() const { return data.seed.value_or(seed); }

    /// Synthetic generator settings for the in-distribution or shifted set.
    SyntheticSpec synthetic_spec(Shift shift, std::size_t per_class) const;

    /// Throws ConfigError on any violated constraint.
    void validate() const;
};

/// Sets one key. Unknown keys and unparsable values raise ConfigError.
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// Applies every line of `text` on top of `base` and validates the result.
ExperimentConfig parse_config(std::string_view text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::string& path);

/// Canonical key=value text; parse_config(config_to_text(c)) reproduces c.
std::string config_to_text(const ExperimentConfig& cfg);

std::vector<std::string> config_keys();

/// Synthetic dataset description for the `synth` command.
struct SynthFileSpec {
    SyntheticSpec spec;
    std::uint64_t seed = 0;
};
SynthFileSpec parse_synth_spec(std::string_view text);

}  // namespace rfrl
