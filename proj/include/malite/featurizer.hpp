#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "malite/byteplot.hpp"

namespace malite {

/// Patch geometry. The window slides vertically with the given overlap;
/// horizontally, patches tile the row without overlap.
struct PatchSpec {
  int ph = 32;
  int pw = 256;
  double overlap = 0.5;

  int stride() const;
  void validate(int image_height, int image_width) const;
};

struct HistogramConfig {
  int bins = 64;

  void validate() const;
  int bin_of(std::uint8_t v) const { return (static_cast<int>(v) * bins) >> 8; }
};

/// One window of an image. Rows past the bottom edge (and columns past the
/// right edge) read as zero.
struct Patch {
  const ByteImage* image = nullptr;
  int row = 0;  // top row of the window
  int col = 0;  // left pixel of the window
  int ph = 0;
  int pw = 0;

  std::size_t sample_count() const {
    return static_cast<std::size_t>(ph) * pw * image->channels;
  }
};

using FeatureVector = std::vector<std::uint32_t>;

/// Number of windows for a dimension of `extent` pixels.
int vertical_windows(int height, const PatchSpec& spec);
int horizontal_windows(int width, const PatchSpec& spec);

std::vector<Patch> extract_patches(const ByteImage& img, const PatchSpec& spec);
std::vector<std::uint32_t> histogram(const Patch& patch, const HistogramConfig& cfg);
FeatureVector featurize(const ByteImage& img, const PatchSpec& spec, const HistogramConfig& cfg);

/// Dense feature matrix with one labelled row per sample.
struct FeatureTable {
  std::vector<std::string> paths;
  std::vector<std::string> labels;
  std::size_t cols = 0;
  std::vector<std::uint32_t> values;  // row-major

  std::size_t rows() const { return paths.size(); }
  std::span<const std::uint32_t> row(std::size_t i) const {
    return {values.data() + i * cols, cols};
  }
  void append(std::string path, std::string label, std::span<const std::uint32_t> v);
};

/// Featurizer settings recorded alongside a table so that eval can
/// reproduce the same front end.
struct FeaturizerSettings {
  PatchSpec patch;
  HistogramConfig hist;
  int side = kDefaultSide;
  bool rgb = false;

  friend bool operator==(const FeaturizerSettings& a, const FeaturizerSettings& b) {
    return a.patch.ph == b.patch.ph && a.patch.pw == b.patch.pw && a.patch.overlap == b.patch.overlap &&
           a.hist.bins == b.hist.bins && a.side == b.side && a.rgb == b.rgb;
  }
};

std::string write_features_csv(const FeatureTable& table, const FeaturizerSettings& settings);
FeatureTable read_features_csv(const std::string& text, FeaturizerSettings* settings = nullptr);

// Packed form: "MLFV", u32 rows, u32 cols, row-major u32 counts.
std::vector<std::uint8_t> encode_features_binary(const FeatureTable& table);
FeatureTable decode_features_binary(std::span<const std::uint8_t> bytes);

}  // namespace malite
