#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "malite/util.hpp"

namespace malite {

struct ForestConfig {
  int n_estimators = 51;
  int max_depth = 15;
  std::uint64_t seed = 0;
  int features_per_split = 0;  // 0 selects floor(sqrt(feature_dim))
  int min_samples_leaf = 1;

  void validate() const;
  int split_features(std::size_t feature_dim) const;
};

/// Flat-array tree node. feature < 0 marks a leaf, whose class_counts hold
/// the training class histogram that reached it.
struct TreeNode {
  std::int32_t feature = -1;
  float threshold = 0.0f;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  std::vector<std::uint32_t> class_counts;

  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // root at index 0

  const TreeNode& leaf_for(std::span<const float> x) const;
  int depth() const;
  friend bool operator==(const Tree&, const Tree&) = default;
};

struct Forest {
  std::vector<Tree> trees;
  int n_classes = 0;
  std::size_t feature_dim = 0;
  ForestConfig config;
};

/// Row-major training matrix.
struct FeatureMatrixView {
  std::span<const float> values;
  std::size_t rows = 0;
  std::size_t cols = 0;

  float at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// Breiman-style forest: bootstrap rows, Gini splits over a random feature
/// subset, depth capped. n_classes = 0 infers max(label) + 1.
Forest train_forest(const FeatureMatrixView& features, std::span<const int> labels,
                    const ForestConfig& cfg, int n_classes = 0);

std::vector<double> predict_proba(const Forest& f, std::span<const float> x);
int predict(const Forest& f, std::span<const float> x);

struct TreeStats {
  int max_depth_observed = 0;
  std::size_t total_nodes = 0;
  std::size_t total_leaves = 0;
};

TreeStats tree_stats(const Forest& f);

void write_forest(const Forest& f, ByteWriter& w);
Forest read_forest(ByteReader& r);

std::vector<float> to_float_features(std::span<const std::uint32_t> counts);

}  // namespace malite
