#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hsc/tensor.hpp"

namespace hsc {

// ---- cubes and masks --------------------------------------------------------

enum class Modality : std::uint8_t { hsi = 0, dsm = 1, sar = 2 };
Modality modality_from_string(const std::string& s);
std::string modality_name(Modality m);

// Band-sequential row-major: values[b*rows*cols + r*cols + c], 32-bit floats.
struct HsiCube {
  int rows = 0, cols = 0, bands = 0;
  Modality modality = Modality::hsi;
  std::vector<float> values;

  float at(int r, int c, int b) const {
    return values[static_cast<std::size_t>(b) * rows * cols + static_cast<std::size_t>(r) * cols +
                  c];
  }
  float& at(int r, int c, int b) {
    return values[static_cast<std::size_t>(b) * rows * cols + static_cast<std::size_t>(r) * cols +
                  c];
  }
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Binary cube format: magic "HSC1", rows/cols/bands as u32 little-endian,
// one modality tag byte, then rows*cols*bands f32 little-endian values
// band-sequentially (17 header bytes total). load inverts save bit-exactly.
void save_cube(const HsiCube& cube, const std::string& path);
HsiCube load_cube(const std::string& path);

// Class indices per pixel; 0 = unlabeled.
struct LabelMask {
  int rows = 0, cols = 0;
  std::vector<std::uint8_t> labels;

  std::uint8_t at(int r, int c) const { return labels[static_cast<std::size_t>(r) * cols + c]; }
  std::uint8_t& at(int r, int c) { return labels[static_cast<std::size_t>(r) * cols + c]; }
  int nonzero_count() const;
  int max_label() const;
};

// 8-bit binary PGM (P5), gray value = class index, 0 = background.
void save_mask_pgm(const LabelMask& mask, const std::string& path);
LabelMask load_mask_pgm(const std::string& path);

// Color classification maps as binary PPM (P6) under a fixed palette
// (class 0 = black). Distinct classes map to distinct colors for C <= 30.
void save_class_map_ppm(const LabelMask& map, const std::string& path);
LabelMask load_class_map_ppm(const std::string& path);

// ---- normalization ----------------------------------------------------------

// Per-band (v - min) / (max - min); constant bands map to 0.
HsiCube minmax_normalize(const HsiCube& cube);

// ---- patches ----------------------------------------------------------------

// One sample per nonzero mask cell (mask row-major order). Patches are
// channels-last [p, p, bands]; centers hold the primary-modality pixel
// vector x_V (always the patch center, also after augmentation).
struct PatchSet {
  int p = 0;
  std::vector<int> band_counts;                  // per modality
  std::vector<std::vector<double>> patches;      // per modality, [count*p*p*bands_m]
  std::vector<double> centers;                   // [count * band_counts[0]]
  std::vector<int> labels;                       // mask values, 1..C
  std::vector<std::pair<int, int>> coords;       // source (row, col)

  int count() const { return static_cast<int>(labels.size()); }
  int modality_count() const { return static_cast<int>(band_counts.size()); }
};

// Zero-padded extraction of p x p patches (p odd) around every labeled cell.
PatchSet extract_patches(const std::vector<const HsiCube*>& cubes, const LabelMask& mask, int p);
PatchSet extract_patches(const HsiCube& cube, const LabelMask& mask, int p);

// Appends rotated copies (clockwise; labels, centers, coords kept):
// originals first, then all samples per angle in the input order.
PatchSet rotate_augment(const PatchSet& set, const std::vector<int>& angles);

// Batch assembly for training: [n, p, p, bands] patches of one modality,
// [n, bands0] center vectors, one-hot labels (mask value k -> class k-1).
Tensor patches_tensor(const PatchSet& set, int modality, const std::vector<int>& indices);
Tensor centers_tensor(const PatchSet& set, const std::vector<int>& indices);
Tensor labels_one_hot(const std::vector<int>& labels, int classes);
Tensor labels_tensor(const PatchSet& set, int classes, const std::vector<int>& indices);
std::vector<int> class_indices(const PatchSet& set, const std::vector<int>& indices);

// CSV manifest "row,col,label,split" covering the train and test sets.
void save_manifest_csv(const std::string& path, const PatchSet& train, const PatchSet& test);
struct ManifestRow {
  int row = 0, col = 0, label = 0;
  std::string split;
};
std::vector<ManifestRow> load_manifest_csv(const std::string& path);

// ---- synthetic scenes -------------------------------------------------------

struct SyntheticSceneSpec {
  int rows = 33, cols = 33;
  std::vector<int> bands = {8};                    // one entry per modality
  std::vector<Modality> modalities = {Modality::hsi};
  int classes = 3;
  double margin = 0.5;      // guaranteed per-band inter-class curve distance
  double noise_std = 0.05;
  int train_per_class = 100;
  int test_per_class = 0;                          // 0 = all remaining labeled cells
  // Class pairs (0-based) whose curves coincide in modality 0 and differ
  // only in later modalities.
  std::vector<std::pair<int, int>> aux_only_pairs;
  std::uint64_t seed = 0;
};

struct SynthScene {
  std::vector<HsiCube> cubes;
  LabelMask full_mask;   // every pixel labeled with its region class (1..C)
  LabelMask train_mask;  // per-class quota, disjoint from test
  LabelMask test_mask;
  // Noise-free per-class curves: curve(m, k, b) = curves[m][k*bands[m] + b].
  std::vector<std::vector<double>> curves;
};

SynthScene synth_generate(const SyntheticSceneSpec& spec);

// ---- view pairs for semi-supervised pretraining -----------------------------

struct PawsAugmentConfig {
  bool channel_swap = true, channel_drop = true, channel_suppress = true, channel_average = true;
  bool flip_horizontal = true, flip_vertical = true, crop = true, rotate = true;
  bool pixel_removal = true, noise = true;
  double probability = 0.5;  // applied independently per enabled augmentation
  double noise_std = 0.02;
  double suppress_factor = 0.5;
};

PawsAugmentConfig paws_identity_augment();

struct ViewPairSet {
  int p = 0, bands = 0, count = 0;
  std::vector<double> anchors;    // [count, p, p, bands]
  std::vector<double> positives;
  std::vector<std::pair<int, int>> anchor_coords;    // top-left corners
  std::vector<std::pair<int, int>> positive_coords;
};

// Fully-interior patch pairs whose spatial intersection covers at least
// overlap_fraction of p*p cells, each view run through the probabilistic
// augmentations. Same seed, same stream.
ViewPairSet paws_view_pairs(const HsiCube& cube, int p, double overlap_fraction, int count,
                            const PawsAugmentConfig& aug, std::uint64_t seed);

}  // namespace hsc
