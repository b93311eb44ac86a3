#include "rfrl/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

namespace fs = std::filesystem;

namespace rfrl {

// ---------------------------------------------------------------------------
// PGM

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string pgm_token(std::istream& is, const std::string& path) {
    std::string tok;
    int c;
    while ((c = is.get()) != EOF) {
        if (c == '#') {
            while ((c = is.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    if (tok.empty()) throw FormatError(path + ": truncated PGM header");
    return tok;
}

std::size_t pgm_number(std::istream& is, const std::string& path, const char* what) {
    const std::string tok = pgm_token(is, path);
    if (tok.empty() || tok.size() > 9 || !std::all_of(tok.begin(), tok.end(), [](char ch) { return std::isdigit(ch); })) {
        throw FormatError(path + ": bad PGM " + what + " '" + tok + "'");
    }
    return std::stoul(tok);
}

}  // namespace

GrayImage read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError(path + ": cannot open");
    char magic[2];
    if (!is.read(magic, 2) || magic[0] != 'P' || magic[1] != '5') throw FormatError(path + ": not a binary PGM (P5)");
    GrayImage img;
    img.width = pgm_number(is, path, "width");
    img.height = pgm_number(is, path, "height");
    const std::size_t maxval = pgm_number(is, path, "maxval");
    if (img.width == 0 || img.height == 0) throw FormatError(path + ": zero image extent");
    if (maxval == 0 || maxval > 255) throw FormatError(path + ": unsupported maxval " + std::to_string(maxval));
    // pgm_token consumed exactly one whitespace byte after maxval.
    img.pixels.resize(img.width * img.height);
    if (!is.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()))) {
        throw FormatError(path + ": truncated pixel data");
    }
    if (maxval != 255) {
        for (auto& p : img.pixels) {
            if (p > maxval) throw FormatError(path + ": pixel exceeds maxval");
            p = static_cast<std::uint8_t>(std::lround(255.0 * p / static_cast<double>(maxval)));
        }
    }
    return img;
}

void write_pgm(const std::string& path, const GrayImage& img) {
    if (img.pixels.size() != img.width * img.height) throw ContractError("write_pgm: pixel count mismatch");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError(path + ": cannot open for writing");
    os << "P5\n" << img.width << ' ' << img.height << "\n255\n";
    os.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (!os) throw FormatError(path + ": write failed");
}

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& plane, std::size_t out_h, std::size_t out_w) {
    if (plane.rank() != 2) throw ShapeError("resize_bilinear expects [H, W], got " + shape_str(plane.shape()));
    const std::size_t in_h = plane.dim(0), in_w = plane.dim(1);
    if (in_h == out_h && in_w == out_w) return plane;
    Tensor<T> out({out_h, out_w});
    const double sy = static_cast<double>(in_h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(in_w) / static_cast<double>(out_w);
    for (std::size_t y = 0; y < out_h; ++y) {
        const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(in_h - 1));
        const auto y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, in_h - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < out_w; ++x) {
            const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(in_w - 1));
            const auto x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, in_w - 1);
            const double wx = fx - static_cast<double>(x0);
            const double top = (1 - wx) * plane[y0 * in_w + x0] + wx * plane[y0 * in_w + x1];
            const double bot = (1 - wx) * plane[y1 * in_w + x0] + wx * plane[y1 * in_w + x1];
            out[y * out_w + x] = static_cast<T>((1 - wy) * top + wy * bot);
        }
    }
    return out;
}

template Tensor<float> resize_bilinear<float>(const Tensor<float>&, std::size_t, std::size_t);
template Tensor<double> resize_bilinear<double>(const Tensor<double>&, std::size_t, std::size_t);

// ---------------------------------------------------------------------------
// Datasets

std::vector<std::size_t> Dataset::labels() const {
    std::vector<std::size_t> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.label);
    return out;
}

void SyntheticSpec::validate() const {
    if (classes != 3) throw ConfigError("synthetic data has exactly 3 classes");
    if (image_size < 8) throw ConfigError("synthetic image_size must be >= 8");
    if (channels == 0) throw ConfigError("synthetic channels must be >= 1");
    if (noise < 0) throw ConfigError("synthetic noise must be >= 0");
    if (!(band_min > 0) || band_max < band_min) throw ConfigError("synthetic band range must satisfy 0 < min <= max");
}

namespace {

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

constexpr double kEdgeWidth = 0.6;  // soft band edge, pixels at 32x32

// Intensity of the layered background at (fractional) row y.
struct BandProfile {
    std::vector<double> bounds;  // K + 1 increasing rows
    std::vector<double> levels;  // K band intensities
    double background = 0.1;
    double edge = kEdgeWidth;

    double operator()(double y) const {
        double v = background;
        for (std::size_t k = 0; k < levels.size(); ++k) {
            v += (levels[k] - background) * (logistic((y - bounds[k]) / edge) - logistic((y - bounds[k + 1]) / edge));
        }
        return v;
    }
};

Sample synth_one(const SyntheticSpec& spec, std::size_t label, Rng& rng) {
    const auto S = static_cast<double>(spec.image_size);
    const double r = S / 32.0;
    const bool ood = spec.shift == Shift::ood;

    // Fixed draw order: every variate below is consumed for every class so
    // the per-sample stream layout does not depend on the label.
    BandProfile prof;
    prof.edge = kEdgeWidth * r;
    prof.background = rng.uniform(0.06, 0.12);
    double y = rng.uniform(0.26, 0.36) * S;
    prof.bounds.push_back(y);
    const double base_levels[4] = {0.85, 0.45, 0.72, 0.55};
    const double tmin = ood ? spec.band_min * 1.5 : spec.band_min;
    const double tmax = ood ? spec.band_max * 1.75 : spec.band_max;
    for (double lvl : base_levels) {
        y += rng.uniform(tmin, tmax) * r;
        prof.bounds.push_back(y);
        prof.levels.push_back(lvl + rng.uniform(-0.05, 0.05));
    }

    const double blob_cx = rng.uniform(0.3, 0.7) * S;
    const double blob_cy = rng.uniform(prof.bounds[1], prof.bounds[3]);
    const double blob_rx = rng.uniform(0.12, 0.2) * S;
    const double blob_ry = rng.uniform(0.07, 0.11) * S;

    const double bump_amp = rng.uniform(0.06, 0.1) * S;
    const double bump_freq = rng.uniform() < 0.5 ? 2.0 : 3.0;
    const double bump_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

    const double sigma = ood ? 2.0 * spec.noise : spec.noise;

    const std::size_t n = spec.image_size;
    Tensor<float> plane({n, n});
    for (std::size_t py = 0; py < n; ++py) {
        for (std::size_t px = 0; px < n; ++px) {
            const double fx = static_cast<double>(px), fy = static_cast<double>(py);
            double v;
            if (label == 2) {
                // Lower layers pushed upwards by periodic bumps.
                const double s = std::max(0.0, std::sin(2.0 * std::numbers::pi * bump_freq * fx / S + bump_phase));
                const double lift = bump_amp * s * s * logistic((fy - prof.bounds[2]) / (1.5 * r));
                v = prof(fy + lift);
            } else {
                v = prof(fy);
            }
            if (label == 1) {
                const double dx = (fx - blob_cx) / blob_rx, dy = (fy - blob_cy) / blob_ry;
                const double rho = std::sqrt(dx * dx + dy * dy);
                v *= 1.0 - 0.85 * logistic((1.0 - rho) / 0.12);
            }
            if (ood) v = 0.5 + 0.65 * (v - 0.5) + 0.08;
            if (sigma > 0) {
                v += sigma * rng.normal();
            }
            plane[py * n + px] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }

    Sample s;
    s.label = label;
    s.image = Tensor<float>({spec.channels, n, n});
    for (std::size_t c = 0; c < spec.channels; ++c) {
        std::copy(plane.data().begin(), plane.data().end(), s.image.data().begin() + static_cast<std::ptrdiff_t>(c * n * n));
    }
    return s;
}

}  // namespace

Dataset synth_generate(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    Dataset ds;
    ds.num_classes = spec.classes;
    ds.class_names = {"0_normal", "1_fluid", "2_drusen"};
    const std::size_t total = spec.per_class * spec.classes;
    ds.samples.reserve(total);
    const std::uint64_t stream_base = spec.shift == Shift::ood ? 0x00D0000000ull : 0x1D00000000ull;
    for (std::size_t i = 0; i < total; ++i) {
        Rng rng = Rng::derive(seed, stream_base + i);
        ds.samples.push_back(synth_one(spec, i % spec.classes, rng));
    }
    return ds;
}

Dataset load_dataset(const std::string& root, std::size_t size, std::size_t channels) {
    if (size == 0 || channels == 0) throw ContractError("load_dataset: size and channels must be positive");
    if (!fs::is_directory(root)) throw DatasetError(root + ": not a directory");
    std::vector<fs::path> class_dirs;
    for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory()) class_dirs.push_back(e.path());
    }
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.size() < 2) throw DatasetError(root + ": need at least two class subdirectories");

    Dataset ds;
    ds.num_classes = class_dirs.size();
    for (std::size_t label = 0; label < class_dirs.size(); ++label) {
        ds.class_names.push_back(class_dirs[label].filename().string());
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(class_dirs[label])) {
            if (e.is_regular_file()) files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) throw DatasetError(class_dirs[label].string() + ": empty class directory");
        for (const auto& f : files) {
            const GrayImage img = read_pgm(f.string());
            Tensor<float> plane({img.height, img.width});
            for (std::size_t i = 0; i < img.pixels.size(); ++i) plane[i] = static_cast<float>(img.pixels[i]) / 255.0f;
            plane = resize_bilinear(plane, size, size);
            Sample s;
            s.label = label;
            s.image = Tensor<float>({channels, size, size});
            for (std::size_t c = 0; c < channels; ++c) {
                std::copy(plane.data().begin(), plane.data().end(),
                          s.image.data().begin() + static_cast<std::ptrdiff_t>(c * size * size));
            }
            ds.samples.push_back(std::move(s));
        }
    }
    return ds;
}

void export_dataset(const Dataset& ds, const std::string& root) {
    std::vector<std::size_t> counters(ds.num_classes, 0);
    for (std::size_t c = 0; c < ds.num_classes; ++c) {
        const std::string name = c < ds.class_names.size() ? ds.class_names[c] : "class_" + std::to_string(c);
        fs::create_directories(fs::path(root) / name);
    }
    for (const auto& s : ds.samples) {
        const std::string name = s.label < ds.class_names.size() ? ds.class_names[s.label] : "class_" + std::to_string(s.label);
        char file[32];
        std::snprintf(file, sizeof(file), "img_%05zu.pgm", counters[s.label]++);
        GrayImage img;
        img.height = s.image.dim(1);
        img.width = s.image.dim(2);
        img.pixels.resize(img.width * img.height);
        for (std::size_t i = 0; i < img.pixels.size(); ++i) {
            img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(s.image[i], 0.0f, 1.0f) * 255.0f));
        }
        write_pgm((fs::path(root) / name / file).string(), img);
    }
}

// ---------------------------------------------------------------------------
// Augmentation

void AugmentConfig::validate() const {
    if (flip_prob < 0 || flip_prob > 1) throw ConfigError("aug.flip_prob must lie in [0, 1]");
    if (rotation_deg < 0 || width_shift < 0 || height_shift < 0) throw ConfigError("augmentation ranges must be >= 0");
    if (!(zoom_min > 0) || zoom_max < zoom_min) throw ConfigError("augmentation zoom range must satisfy 0 < min <= max");
}

Tensor<float> apply_affine(const Tensor<float>& image, const AffineParams& p) {
    if (image.rank() != 3) throw ShapeError("apply_affine expects [C, H, W], got " + shape_str(image.shape()));
    const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
    Tensor<float> src = image;
    if (p.flip) {
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t y = 0; y < H; ++y) {
                float* row = src.data().data() + (c * H + y) * W;
                std::reverse(row, row + W);
            }
        }
    }
    if (p.rotation_deg == 0.0 && p.zoom == 1.0 && p.shift_x == 0.0 && p.shift_y == 0.0) return src;

    const double th = p.rotation_deg * std::numbers::pi / 180.0;
    const double cs = std::cos(th), sn = std::sin(th);
    const double cx = (static_cast<double>(W) - 1.0) / 2.0, cy = (static_cast<double>(H) - 1.0) / 2.0;
    Tensor<float> out(image.shape());
    auto at = [&](std::size_t c, std::ptrdiff_t y, std::ptrdiff_t x) -> double {
        if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(H) || x >= static_cast<std::ptrdiff_t>(W)) return 0.0;
        return src[(c * H + static_cast<std::size_t>(y)) * W + static_cast<std::size_t>(x)];
    };
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            // Inverse map: undo shift, zoom and rotation (content rotates
            // counter-clockwise on screen with y pointing down).
            const double ox = (static_cast<double>(x) - cx - p.shift_x) / p.zoom;
            const double oy = (static_cast<double>(y) - cy - p.shift_y) / p.zoom;
            const double sx = cs * ox - sn * oy + cx;
            const double sy = sn * ox + cs * oy + cy;
            const double fx = std::floor(sx), fy = std::floor(sy);
            const double wx = sx - fx, wy = sy - fy;
            const auto ix = static_cast<std::ptrdiff_t>(fx), iy = static_cast<std::ptrdiff_t>(fy);
            for (std::size_t c = 0; c < C; ++c) {
                const double v = (1 - wy) * ((1 - wx) * at(c, iy, ix) + wx * at(c, iy, ix + 1)) +
                                 wy * ((1 - wx) * at(c, iy + 1, ix) + wx * at(c, iy + 1, ix + 1));
                out[(c * H + y) * W + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return out;
}

Sample augment(const Sample& s, const AugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    if (s.image.rank() != 3) throw ShapeError("augment expects [C, H, W], got " + shape_str(s.image.shape()));
    const double u_flip = rng.uniform();
    const double u_rot = rng.uniform();
    const double u_zoom = rng.uniform();
    const double u_sx = rng.uniform();
    const double u_sy = rng.uniform();
    AffineParams p;
    p.flip = u_flip < cfg.flip_prob;
    p.rotation_deg = cfg.rotation_deg * (2.0 * u_rot - 1.0);
    p.zoom = cfg.zoom_min + (cfg.zoom_max - cfg.zoom_min) * u_zoom;
    p.shift_x = cfg.width_shift * (2.0 * u_sx - 1.0) * static_cast<double>(s.image.dim(2));
    p.shift_y = cfg.height_shift * (2.0 * u_sy - 1.0) * static_cast<double>(s.image.dim(1));
    return Sample{apply_affine(s.image, p), s.label};
}

// ---------------------------------------------------------------------------
// Splits

namespace {

// Seeded per-class shuffles merged so that every prefix holds each class in
// proportion (within one sample).
std::vector<std::size_t> stratified_order(const std::vector<std::size_t>& labels, std::uint64_t seed) {
    std::size_t classes = 0;
    for (auto l : labels) classes = std::max(classes, l + 1);
    std::vector<std::vector<std::size_t>> by_class(classes);
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    Rng rng = Rng::derive(seed, 0x5917);
    for (auto& v : by_class) rng.shuffle(v);

    struct Key {
        double pos;
        std::size_t cls, idx;
    };
    std::vector<Key> keys;
    keys.reserve(labels.size());
    for (std::size_t c = 0; c < classes; ++c) {
        const auto n = static_cast<double>(by_class[c].size());
        for (std::size_t j = 0; j < by_class[c].size(); ++j) {
            keys.push_back({(static_cast<double>(j) + 0.5) / n, c, by_class[c][j]});
        }
    }
    std::sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
        return a.pos != b.pos ? a.pos < b.pos : a.cls < b.cls;
    });
    std::vector<std::size_t> order;
    order.reserve(keys.size());
    for (const auto& k : keys) order.push_back(k.idx);
    return order;
}

}  // namespace

std::vector<std::vector<std::size_t>> split_counts(const std::vector<std::size_t>& labels,
                                                   const std::vector<std::size_t>& counts, std::uint64_t seed) {
    std::size_t total = 0;
    for (auto c : counts) total += c;
    if (total != labels.size()) {
        throw ContractError("split_counts: partition sizes sum to " + std::to_string(total) + " but there are " +
                            std::to_string(labels.size()) + " samples");
    }
    const std::vector<std::size_t> order = stratified_order(labels, seed);
    std::vector<std::vector<std::size_t>> parts;
    std::size_t pos = 0;
    for (auto c : counts) {
        parts.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(pos), order.begin() + static_cast<std::ptrdiff_t>(pos + c));
        pos += c;
    }
    return parts;
}

std::vector<std::vector<std::size_t>> split(const std::vector<std::size_t>& labels, const SplitScheme& scheme,
                                            std::uint64_t seed) {
    if (const auto* h = std::get_if<Holdout>(&scheme)) {
        if (h->train < 0 || h->val < 0 || h->test < 0 || std::abs(h->train + h->val + h->test - 1.0) > 1e-9) {
            throw ContractError("holdout fractions must be non-negative and sum to 1");
        }
        const auto n = static_cast<double>(labels.size());
        const auto n_train = static_cast<std::size_t>(std::floor(h->train * n + 1e-9));
        const auto n_val = static_cast<std::size_t>(std::floor(h->val * n + 1e-9));
        return split_counts(labels, {n_train, n_val, labels.size() - n_train - n_val}, seed);
    }
    const std::size_t k = std::get<KFold>(scheme).k;
    if (k < 2) throw ContractError("kfold needs k >= 2");
    std::vector<std::size_t> per_class;
    for (auto l : labels) {
        if (l >= per_class.size()) per_class.resize(l + 1, 0);
        ++per_class[l];
    }
    for (std::size_t c = 0; c < per_class.size(); ++c) {
        if (per_class[c] > 0 && per_class[c] < k) {
            throw DatasetError("class " + std::to_string(c) + " has " + std::to_string(per_class[c]) +
                               " samples, fewer than k = " + std::to_string(k));
        }
    }
    const std::vector<std::size_t> order = stratified_order(labels, seed);
    std::vector<std::vector<std::size_t>> folds(k);
    for (std::size_t p = 0; p < order.size(); ++p) folds[p % k].push_back(order[p]);
    return folds;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> make_batch(const std::vector<Sample>& samples, std::size_t num_classes) {
    if (samples.empty()) throw ContractError("make_batch: empty batch");
    const Shape& img = samples.front().image.shape();
    const std::size_t per = samples.front().image.size();
    Shape xs{samples.size()};
    xs.insert(xs.end(), img.begin(), img.end());
    Tensor<T> x(xs);
    Tensor<T> y({samples.size(), num_classes});
    for (std::size_t b = 0; b < samples.size(); ++b) {
        if (samples[b].image.shape() != img) throw ShapeError("make_batch: images differ in shape");
        if (samples[b].label >= num_classes) throw ContractError("make_batch: label out of range");
        std::copy(samples[b].image.data().begin(), samples[b].image.data().end(),
                  x.data().begin() + static_cast<std::ptrdiff_t>(b * per));
        y[b * num_classes + samples[b].label] = T(1);
    }
    return {std::move(x), std::move(y)};
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> make_batch(const Dataset& ds, const std::vector<std::size_t>& indices) {
    std::vector<Sample> picked;
    picked.reserve(indices.size());
    for (auto i : indices) picked.push_back(ds.samples.at(i));
    return make_batch<T>(picked, ds.num_classes);
}

template std::pair<Tensor<float>, Tensor<float>> make_batch<float>(const std::vector<Sample>&, std::size_t);
template std::pair<Tensor<double>, Tensor<double>> make_batch<double>(const std::vector<Sample>&, std::size_t);
template std::pair<Tensor<float>, Tensor<float>> make_batch<float>(const Dataset&, const std::vector<std::size_t>&);
template std::pair<Tensor<double>, Tensor<double>> make_batch<double>(const Dataset&, const std::vector<std::size_t>&);

}  // namespace rfrl
