#include "rfrl/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace rfrl {

namespace {

std::string_view trim(std::string_view s) {
    const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what) {
    throw ConfigError(key + ": cannot parse '" + value + "' as " + what);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
    return out;
}

std::size_t to_size(const std::string& key, const std::string& v) { return static_cast<std::size_t>(to_u64(key, v)); }

double to_double(const std::string& key, const std::string& v) {
    // from_chars for double is missing from older libstdc++; strtod is fine here.
    if (v.empty()) bad_value(key, v, "a number");
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (end != v.c_str() + v.size() || !std::isfinite(d)) bad_value(key, v, "a finite number");
    return d;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    bad_value(key, v, "a boolean");
}

std::vector<std::size_t> to_size_list(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_size(key, std::string(trim(item))));
    if (out.empty()) bad_value(key, v, "a comma-separated list");
    return out;
}

std::string fmt_double(double d) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", d);
    return buf;
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct Field {
    std::string key;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

#define RFRL_SIZE_FIELD(KEY, MEMBER)                                                                      \
    Field {                                                                                                \
        KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = to_size(KEY, v); },               \
            [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); }                            \
    }
#define RFRL_DOUBLE_FIELD(KEY, MEMBER)                                                                    \
    Field {                                                                                                \
        KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = to_double(KEY, v); },             \
            [](const ExperimentConfig& c) { return fmt_double(c.MEMBER); }                                \
    }
#define RFRL_BOOL_FIELD(KEY, MEMBER)                                                                      \
    Field {                                                                                                \
        KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = to_bool(KEY, v); },               \
            [](const ExperimentConfig& c) { return fmt_bool(c.MEMBER); }                                  \
    }
#define RFRL_STRING_FIELD(KEY, MEMBER)                                                                    \
    Field {                                                                                                \
        KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = v; },                             \
            [](const ExperimentConfig& c) { return c.MEMBER; }                                            \
    }

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        {"seed", [](ExperimentConfig& c, const std::string& v) { c.seed = to_u64("seed", v); },
         [](const ExperimentConfig& c) { return std::to_string(c.seed); }},
        RFRL_STRING_FIELD("out_dir", out_dir),

        RFRL_SIZE_FIELD("model.in_channels", model.in_channels),
        {"model.image_size",
         [](ExperimentConfig& c, const std::string& v) { c.model.height = c.model.width = to_size("model.image_size", v); },
         [](const ExperimentConfig& c) { return std::to_string(c.model.height); }},
        RFRL_SIZE_FIELD("model.n_stages", model.n_stages),
        RFRL_SIZE_FIELD("model.stem_channels", model.stem_channels),
        {"model.stage_channels",
         [](ExperimentConfig& c, const std::string& v) { c.model.stage_channels = to_size_list("model.stage_channels", v); },
         [](const ExperimentConfig& c) {
             std::string s;
             for (std::size_t i = 0; i < c.model.stage_channels.size(); ++i) {
                 s += (i ? "," : "") + std::to_string(c.model.stage_channels[i]);
             }
             return s;
         }},
        RFRL_SIZE_FIELD("model.num_classes", model.num_classes),

        RFRL_BOOL_FIELD("loss.supervised", model.loss_switches.supervised),
        RFRL_BOOL_FIELD("loss.unsupervised", model.loss_switches.unsupervised),
        RFRL_BOOL_FIELD("loss.frs", model.loss_switches.frs),
        {"loss.frs_norm",
         [](ExperimentConfig& c, const std::string& v) {
             try {
                 c.frs_norm = parse_frs_norm(v);
             } catch (const Error&) {
                 bad_value("loss.frs_norm", v, "one of squared, l1, l2");
             }
         },
         [](const ExperimentConfig& c) { return to_string(c.frs_norm); }},

        RFRL_DOUBLE_FIELD("optim.lr", adam.lr),
        RFRL_DOUBLE_FIELD("optim.beta1", adam.beta1),
        RFRL_DOUBLE_FIELD("optim.beta2", adam.beta2),
        RFRL_DOUBLE_FIELD("optim.eps", adam.eps),

        RFRL_SIZE_FIELD("train.batch_size", batch_size),
        RFRL_SIZE_FIELD("train.epochs", epochs),
        RFRL_BOOL_FIELD("train.augment", augment),
        RFRL_BOOL_FIELD("train.eval_train_each_epoch", eval_train_each_epoch),

        {"plateau.patience",
         [](ExperimentConfig& c, const std::string& v) { c.plateau.patience = static_cast<int>(to_size("plateau.patience", v)); },
         [](const ExperimentConfig& c) { return std::to_string(c.plateau.patience); }},
        RFRL_DOUBLE_FIELD("plateau.factor", plateau.factor),
        RFRL_DOUBLE_FIELD("plateau.min_lr", plateau.min_lr),

        RFRL_STRING_FIELD("data.source", data.source),
        RFRL_STRING_FIELD("data.path", data.path),
        RFRL_STRING_FIELD("data.ood_path", data.ood_path),
        RFRL_SIZE_FIELD("data.train", data.n_train),
        RFRL_SIZE_FIELD("data.val", data.n_val),
        RFRL_SIZE_FIELD("data.test", data.n_test),
        RFRL_SIZE_FIELD("data.ood", data.n_ood),
        {"data.seed",
         [](ExperimentConfig& c, const std::string& v) {
             if (v.empty() || v == "auto") {
                 c.data.seed.reset();
             } else {
                 c.data.seed = to_u64("data.seed", v);
             }
         },
         [](const ExperimentConfig& c) { return c.data.seed ? std::to_string(*c.data.seed) : std::string("auto"); }},
        RFRL_STRING_FIELD("data.split", data.split),
        RFRL_SIZE_FIELD("data.kfold", data.kfold),

        RFRL_DOUBLE_FIELD("synth.noise", synth_noise),
        RFRL_DOUBLE_FIELD("synth.band_min", synth_band_min),
        RFRL_DOUBLE_FIELD("synth.band_max", synth_band_max),

        RFRL_DOUBLE_FIELD("aug.flip_prob", aug.flip_prob),
        RFRL_DOUBLE_FIELD("aug.rotation_deg", aug.rotation_deg),
        RFRL_DOUBLE_FIELD("aug.zoom_min", aug.zoom_min),
        RFRL_DOUBLE_FIELD("aug.zoom_max", aug.zoom_max),
        RFRL_DOUBLE_FIELD("aug.width_shift", aug.width_shift),
        RFRL_DOUBLE_FIELD("aug.height_shift", aug.height_shift),
    };
    return table;
}

#undef RFRL_SIZE_FIELD
#undef RFRL_DOUBLE_FIELD
#undef RFRL_BOOL_FIELD
#undef RFRL_STRING_FIELD

}  // namespace

std::vector<KeyValue> parse_key_values(std::string_view text) {
    std::vector<KeyValue> out;
    std::set<std::string> seen;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected key=value, got '" + std::string(line) + "'");
        }
        KeyValue kv{std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))), line_no};
        if (kv.key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
        if (!seen.insert(kv.key).second) {
            throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + kv.key + "'");
        }
        out.push_back(std::move(kv));
    }
    return out;
}

std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

SyntheticSpec ExperimentConfig::synthetic_spec(Shift shift, std::size_t per_class) const {
    SyntheticSpec s;
    s.classes = model.num_classes;
    s.image_size = model.height;
    s.channels = model.in_channels;
    s.per_class = per_class;
    s.noise = synth_noise;
    s.band_min = synth_band_min;
    s.band_max = synth_band_max;
    s.shift = shift;
    return s;
}

void ExperimentConfig::validate() const {
    model.validate();
    if (!model.loss_switches.any()) throw ConfigError("at least one of loss.supervised/unsupervised/frs must be on");
    if (!(adam.lr > 0)) throw ConfigError("optim.lr must be > 0");
    if (!(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1)) {
        throw ConfigError("optim.beta1/beta2 must lie in [0, 1)");
    }
    if (!(adam.eps > 0)) throw ConfigError("optim.eps must be > 0");
    if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
    if (plateau.patience < 1) throw ConfigError("plateau.patience must be >= 1");
    if (!(plateau.factor > 0 && plateau.factor < 1)) throw ConfigError("plateau.factor must lie in (0, 1)");
    if (!(plateau.min_lr >= 0)) throw ConfigError("plateau.min_lr must be >= 0");
    aug.validate();
    if (data.split != "holdout" && data.split != "kfold") throw ConfigError("data.split must be holdout or kfold");
    if (data.split == "kfold" && data.kfold < 2) throw ConfigError("data.kfold must be >= 2");
    if (data.source == "synthetic") {
        const std::size_t c = model.num_classes;
        synthetic_spec(Shift::none, 1).validate();
        if (model.height != model.width) throw ConfigError("synthetic data is square");
        const std::size_t id_total = data.n_train + data.n_val + data.n_test;
        if (id_total == 0 || id_total % c != 0) {
            throw ConfigError("data.train + data.val + data.test = " + std::to_string(id_total) +
                              " must be a positive multiple of " + std::to_string(c));
        }
        if (data.n_ood % c != 0) throw ConfigError("data.ood must be a multiple of " + std::to_string(c));
        if (data.n_train < batch_size) throw ConfigError("data.train must hold at least one batch");
    } else if (data.source == "dir") {
        if (data.path.empty()) throw ConfigError("data.path is required when data.source = dir");
    } else {
        throw ConfigError("data.source must be synthetic or dir, got '" + data.source + "'");
    }
}

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& f : fields()) {
        if (f.key == key) {
            f.set(cfg, value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

ExperimentConfig parse_config(std::string_view text, ExperimentConfig base) {
    for (const auto& kv : parse_key_values(text)) {
        try {
            set_config_value(base, kv.key, kv.value);
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(kv.line) + ": " + e.what());
        }
    }
    base.validate();
    return base;
}

ExperimentConfig load_config(const std::string& path) {
    try {
        return parse_config(read_text_file(path));
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

std::string config_to_text(const ExperimentConfig& cfg) {
    std::string out;
    for (const auto& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
    return out;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& f : fields()) keys.push_back(f.key);
    return keys;
}

SynthFileSpec parse_synth_spec(std::string_view text) {
    SynthFileSpec out;
    SyntheticSpec& s = out.spec;
    for (const auto& kv : parse_key_values(text)) {
        const std::string& k = kv.key;
        const std::string& v = kv.value;
        if (k == "seed") {
            out.seed = to_u64(k, v);
        } else if (k == "classes") {
            s.classes = to_size(k, v);
        } else if (k == "image_size") {
            s.image_size = to_size(k, v);
        } else if (k == "channels") {
            s.channels = to_size(k, v);
        } else if (k == "per_class") {
            s.per_class = to_size(k, v);
        } else if (k == "noise") {
            s.noise = to_double(k, v);
        } else if (k == "band_min") {
            s.band_min = to_double(k, v);
        } else if (k == "band_max") {
            s.band_max = to_double(k, v);
        } else if (k == "shift") {
            if (v == "none") {
                s.shift = Shift::none;
            } else if (v == "ood") {
                s.shift = Shift::ood;
            } else {
                bad_value(k, v, "none or ood");
            }
        } else {
            throw ConfigError("line " + std::to_string(kv.line) + ": unknown synth key '" + k + "'");
        }
    }
    s.validate();
    if (s.per_class == 0) throw ConfigError("per_class must be >= 1");
    return out;
}

}  // namespace rfrl
