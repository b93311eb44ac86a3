#include "rfrl/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "rfrl/binary_io.hpp"

namespace rfrl {

namespace {

constexpr char kMagic[8] = {'R', 'F', 'R', 'L', 'C', 'K', 'P', 'T'};

void put_scalar(std::vector<std::pair<std::string, Tensor<double>>>& out, std::string name, double v) {
    out.emplace_back(std::move(name), Tensor<double>::scalar(v));
}

}  // namespace

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
    std::vector<std::pair<std::string, const Tensor<float>*>> f32;
    ckpt.model.visit([&](const std::string& name, const Tensor<float>& t) { f32.emplace_back(name, &t); });
    std::vector<std::pair<std::string, Tensor<double>>> f64;
    if (ckpt.adam) {
        const auto& a = *ckpt.adam;
        for (const auto& [name, t] : a.m) f32.emplace_back("opt.m." + name, &t);
        for (const auto& [name, t] : a.v) f32.emplace_back("opt.v." + name, &t);
        put_scalar(f64, "opt.step", static_cast<double>(a.step));
        put_scalar(f64, "opt.lr", a.lr);
        put_scalar(f64, "opt.beta1", a.beta1);
        put_scalar(f64, "opt.beta2", a.beta2);
        put_scalar(f64, "opt.eps", a.eps);
    }
    if (ckpt.plateau) {
        const auto& p = *ckpt.plateau;
        put_scalar(f64, "opt.plateau.best", p.best_val_loss);
        put_scalar(f64, "opt.plateau.since", p.epochs_since_improve);
        put_scalar(f64, "opt.plateau.patience", p.config.patience);
        put_scalar(f64, "opt.plateau.factor", p.config.factor);
        put_scalar(f64, "opt.plateau.min_lr", p.config.min_lr);
    }
    for (const auto& [k, v] : ckpt.meta) put_scalar(f64, "meta." + k, v);

    os.write(kMagic, sizeof(kMagic));
    io::put_le(os, kCheckpointVersion);
    io::put_string(os, config_to_text(ckpt.config));
    io::put_le(os, static_cast<std::uint32_t>(f32.size() + f64.size()));
    for (const auto& [name, t] : f32) {
        io::put_string(os, name);
        write_tensor(os, *t);
    }
    for (const auto& [name, t] : f64) {
        io::put_string(os, name);
        write_tensor(os, t);
    }
    if (!os) throw FormatError("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& is) {
    char magic[sizeof(kMagic)];
    if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw FormatError("not a checkpoint (bad magic)");
    }
    const auto version = io::get_le<std::uint16_t>(is);
    if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));

    Checkpoint ckpt;
    const std::string config_text = io::get_string(is);
    try {
        ckpt.config = parse_config(config_text);
    } catch (const ConfigError& e) {
        throw FormatError(std::string("embedded config: ") + e.what());
    }

    // Every value is read as f64; f32 payloads widen and narrow back exactly.
    std::map<std::string, Tensor<double>> tensors;
    const auto count = io::get_le<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = io::get_string(is, 4096);
        Tensor<double> t = read_tensor<double>(is);
        if (!tensors.emplace(std::move(name), std::move(t)).second) throw FormatError("duplicate tensor name");
    }
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after checkpoint");

    std::set<std::string> used;
    auto take = [&](const std::string& name) -> const Tensor<double>* {
        auto it = tensors.find(name);
        if (it == tensors.end()) return nullptr;
        used.insert(name);
        return &it->second;
    };
    auto scalar = [&](const std::string& name) {
        const Tensor<double>* t = take(name);
        if (!t || t->size() != 1) throw FormatError("checkpoint scalar '" + name + "' missing");
        return t->item();
    };

    ckpt.model = build_model<float>(ckpt.config.model, 0);
    ckpt.model.visit([&](const std::string& name, Tensor<float>& p) {
        const Tensor<double>* t = take(name);
        if (!t) throw FormatError("checkpoint is missing parameter '" + name + "'");
        if (t->shape() != p.shape()) {
            throw FormatError("parameter '" + name + "' has shape " + shape_str(t->shape()) + ", config expects " +
                              shape_str(p.shape()));
        }
        p = t->cast<float>();
    });

    if (tensors.count("opt.step")) {
        AdamState<float> a;
        a.step = static_cast<std::uint64_t>(scalar("opt.step"));
        a.lr = scalar("opt.lr");
        a.beta1 = scalar("opt.beta1");
        a.beta2 = scalar("opt.beta2");
        a.eps = scalar("opt.eps");
        for (const auto& [name, t] : tensors) {
            if (name.starts_with("opt.m.")) a.m.emplace(name.substr(6), t.cast<float>());
            if (name.starts_with("opt.v.")) a.v.emplace(name.substr(6), t.cast<float>());
        }
        for (const auto& [name, t] : a.m) used.insert("opt.m." + name);
        for (const auto& [name, t] : a.v) used.insert("opt.v." + name);
        ckpt.adam = std::move(a);
    }
    if (tensors.count("opt.plateau.best")) {
        PlateauState p;
        p.best_val_loss = scalar("opt.plateau.best");
        p.epochs_since_improve = static_cast<int>(scalar("opt.plateau.since"));
        p.config.patience = static_cast<int>(scalar("opt.plateau.patience"));
        p.config.factor = scalar("opt.plateau.factor");
        p.config.min_lr = scalar("opt.plateau.min_lr");
        ckpt.plateau = p;
    }
    for (const auto& [name, t] : tensors) {
        if (name.starts_with("meta.")) {
            ckpt.meta[name.substr(5)] = scalar(name);
        }
    }
    for (const auto& [name, t] : tensors) {
        if (!used.count(name)) throw FormatError("unexpected tensor '" + name + "' in checkpoint");
    }
    return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw FormatError("cannot open " + tmp + " for writing");
        write_checkpoint(os, ckpt);
        os.flush();
        if (!os) throw FormatError("failed writing " + tmp);
    }
    fs::rename(tmp, target);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open checkpoint " + path);
    try {
        return read_checkpoint(is);
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

}  // namespace rfrl
