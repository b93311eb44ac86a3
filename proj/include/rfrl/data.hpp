#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "rfrl/rng.hpp"
#include "rfrl/tensor.hpp"

namespace rfrl {

/// 8-bit grayscale image as stored in a binary PGM (P5) file.
struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  // row-major
};

/// Raises FormatError (with the path) on anything but a well-formed P5 file
/// with maxval <= 255.
GrayImage read_pgm(const std::string& path);
void write_pgm(const std::string& path, const GrayImage& img);

/// Bilinear resample of an [H, W] plane (half-pixel centres, edge clamped).
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& plane, std::size_t out_h, std::size_t out_w);

enum class Shift { none, ood };

/// Layered OCT-like images: class 0 flat bands, class 1 bands with a dark
/// elliptical blob, class 2 bands with sinusoidal bumps.
struct SyntheticSpec {
    std::size_t classes = 3;
    std::size_t image_size = 32;
    std::size_t channels = 1;
    std::size_t per_class = 100;
    double noise = 0.05;
    double band_min = 2.0;  // band thickness range in pixels at 32x32
    double band_max = 4.0;
    Shift shift = Shift::none;

    void validate() const;
};

struct Sample {
    Tensor<float> image;  // [C, S, S], values in [0, 1]
    std::size_t label = 0;
};

struct Dataset {
    std::vector<Sample> samples;
    std::size_t num_classes = 0;
    std::vector<std::string> class_names;

    std::size_t size() const { return samples.size(); }
    std::vector<std::size_t> labels() const;
};

/// Balanced, interleaved labels (sample i has label i % classes).
Dataset synth_generate(const SyntheticSpec& spec, std::uint64_t seed);

/// One subdirectory per class (sorted by name -> label), each holding P5
/// images. Images are scaled to [0, 1], resized to `size` x `size` and
/// replicated to `channels`.
Dataset load_dataset(const std::string& root, std::size_t size, std::size_t channels = 1);

/// Writes the dataset in the layout load_dataset reads (channel 0 only).
void export_dataset(const Dataset& ds, const std::string& root);

struct AugmentConfig {
    double flip_prob = 0.5;
    double rotation_deg = 15.0;
    double zoom_min = 0.9;
    double zoom_max = 1.1;
    double width_shift = 0.1;
    double height_shift = 0.1;

    void validate() const;
};

/// Random flip, rotation, zoom and shift with bilinear resampling and zero
/// fill. Draws the same number of variates whatever the configuration.
Sample augment(const Sample& s, const AugmentConfig& cfg, Rng& rng);

/// Deterministic geometric transform used by augment(); exposed for tests.
struct AffineParams {
    bool flip = false;
    double rotation_deg = 0.0;  // counter-clockwise as displayed
    double zoom = 1.0;
    double shift_x = 0.0;  // pixels
    double shift_y = 0.0;
};
Tensor<float> apply_affine(const Tensor<float>& image, const AffineParams& p);

struct Holdout {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};
struct KFold {
    std::size_t k = 5;
};
using SplitScheme = std::variant<Holdout, KFold>;

/// Stratified, seeded partition of sample indices: holdout yields
/// {train, val, test}; kfold yields k folds.
std::vector<std::vector<std::size_t>> split(const std::vector<std::size_t>& labels, const SplitScheme& scheme,
                                            std::uint64_t seed);

/// Stratified holdout with exact partition sizes (must sum to labels.size()).
std::vector<std::vector<std::size_t>> split_counts(const std::vector<std::size_t>& labels,
                                                   const std::vector<std::size_t>& counts, std::uint64_t seed);

/// Stacks samples into x[B, C, H, W] and one-hot y[B, classes].
template <typename T>
std::pair<Tensor<T>, Tensor<T>> make_batch(const std::vector<Sample>& samples, std::size_t num_classes);

template <typename T>
std::pair<Tensor<T>, Tensor<T>> make_batch(const Dataset& ds, const std::vector<std::size_t>& indices);

}  // namespace rfrl
