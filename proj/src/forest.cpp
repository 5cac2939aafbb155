#include "malite/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "malite/error.hpp"
#include "malite/util.hpp"

namespace malite {

void ForestConfig::validate() const {
  if (n_estimators < 1) fail(ErrorKind::InvalidConfig, "n_estimators must be >= 1");
  if (max_depth < 1) fail(ErrorKind::InvalidConfig, "max_depth must be >= 1");
  if (features_per_split < 0) fail(ErrorKind::InvalidConfig, "features_per_split must be >= 0");
  if (min_samples_leaf < 1) fail(ErrorKind::InvalidConfig, "min_samples_leaf must be >= 1");
}

int ForestConfig::split_features(std::size_t feature_dim) const {
  if (features_per_split > 0) return std::min<int>(features_per_split, static_cast<int>(feature_dim));
  return std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(feature_dim)))));
}

const TreeNode& Tree::leaf_for(std::span<const float> x) const {
  std::uint32_t i = 0;
  while (!nodes[i].is_leaf()) {
    const auto& n = nodes[i];
    i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return nodes[i];
}

int Tree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<int> d(nodes.size(), 0);
  int deepest = 0;
  // children are always appended after their parent
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, d[i]);
    if (!nodes[i].is_leaf()) {
      d[nodes[i].left] = d[i] + 1;
      d[nodes[i].right] = d[i] + 1;
    }
  }
  return deepest;
}

namespace {

struct Split {
  double score = 0.0;
  int feature = -1;
  float threshold = 0.0f;
};

/// Weighted Gini impurity n * (1 - sum p^2) = n - sum c^2 / n.
double weighted_gini(std::span<const std::uint32_t> counts, std::uint32_t n) {
  if (n == 0) return 0.0;
  double sq = 0.0;
  for (auto c : counts) sq += static_cast<double>(c) * c;
  return static_cast<double>(n) - sq / n;
}

bool better(const Split& a, const Split& b) {
  if (b.feature < 0) return true;
  if (a.score != b.score) return a.score < b.score;
  if (a.feature != b.feature) return a.feature < b.feature;
  return a.threshold < b.threshold;
}

class TreeBuilder {
 public:
  TreeBuilder(const FeatureMatrixView& x, std::span<const int> y, int n_classes, const ForestConfig& cfg,
              std::uint64_t seed)
      : x_(x), y_(y), n_classes_(n_classes), cfg_(cfg), rng_(seed),
        mtry_(cfg.split_features(x.cols)) {}

  Tree build() {
    std::vector<std::uint32_t> sample(x_.rows);
    for (auto& s : sample) s = static_cast<std::uint32_t>(uniform_index(rng_, x_.rows));
    tree_.nodes.clear();
    tree_.nodes.emplace_back();
    grow(0, sample, 0);
    return std::move(tree_);
  }

 private:
  void grow(std::uint32_t node, std::vector<std::uint32_t>& sample, int depth) {
    std::vector<std::uint32_t> counts(static_cast<std::size_t>(n_classes_), 0);
    for (auto s : sample) ++counts[static_cast<std::size_t>(y_[s])];
    const auto n = static_cast<std::uint32_t>(sample.size());
    const bool pure = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;

    Split best;
    if (!pure && depth < cfg_.max_depth && n >= 2u * static_cast<std::uint32_t>(cfg_.min_samples_leaf)) {
      best = find_split(sample, weighted_gini(counts, n));
    }
    if (best.feature < 0) {
      tree_.nodes[node].class_counts = std::move(counts);
      return;
    }

    std::vector<std::uint32_t> left, right;
    for (auto s : sample) {
      (x_.at(s, static_cast<std::size_t>(best.feature)) <= best.threshold ? left : right).push_back(s);
    }
    sample.clear();
    sample.shrink_to_fit();

    const auto l = static_cast<std::uint32_t>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    tree_.nodes.emplace_back();
    auto& parent = tree_.nodes[node];
    parent.feature = best.feature;
    parent.threshold = best.threshold;
    parent.left = l;
    parent.right = l + 1;
    grow(l, left, depth + 1);
    grow(l + 1, right, depth + 1);
  }

  Split find_split(std::span<const std::uint32_t> sample, double parent_score) {
    const std::size_t dim = x_.cols;
    if (order_.size() != dim) {
      order_.resize(dim);
    }
    std::iota(order_.begin(), order_.end(), 0u);

    Split best;
    int informative = 0;
    const std::size_t n = sample.size();
    const auto min_leaf = static_cast<std::size_t>(cfg_.min_samples_leaf);
    std::vector<std::uint32_t> left(static_cast<std::size_t>(n_classes_));
    std::vector<std::uint32_t> right(static_cast<std::size_t>(n_classes_));

    // Draw features without replacement until mtry non-constant ones were
    // examined or the pool runs out.
    for (std::size_t drawn = 0; drawn < dim && informative < mtry_; ++drawn) {
      std::size_t j = drawn + uniform_index(rng_, dim - drawn);
      std::swap(order_[drawn], order_[j]);
      const std::uint32_t f = order_[drawn];

      pairs_.clear();
      for (auto s : sample) pairs_.emplace_back(x_.at(s, f), y_[s]);
      auto [lo, hi] = std::minmax_element(pairs_.begin(), pairs_.end(),
                                          [](auto& a, auto& b) { return a.first < b.first; });
      if (!(lo->first < hi->first)) continue;
      ++informative;
      std::sort(pairs_.begin(), pairs_.end());

      std::fill(left.begin(), left.end(), 0u);
      std::fill(right.begin(), right.end(), 0u);
      for (auto& p : pairs_) ++right[static_cast<std::size_t>(p.second)];
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const auto c = static_cast<std::size_t>(pairs_[i].second);
        ++left[c];
        --right[c];
        const float a = pairs_[i].first;
        const float b = pairs_[i + 1].first;
        if (!(a < b)) continue;
        const std::size_t nl = i + 1;
        if (nl < min_leaf || n - nl < min_leaf) continue;
        Split cand;
        cand.score = weighted_gini(left, static_cast<std::uint32_t>(nl)) +
                     weighted_gini(right, static_cast<std::uint32_t>(n - nl));
        cand.feature = static_cast<int>(f);
        float mid = static_cast<float>((static_cast<double>(a) + b) / 2.0);
        cand.threshold = mid < b ? mid : a;
        if (better(cand, best)) best = cand;
      }
    }
    if (best.feature >= 0 && !(best.score < parent_score - 1e-12 * static_cast<double>(n))) {
      return {};
    }
    return best;
  }

  const FeatureMatrixView& x_;
  std::span<const int> y_;
  int n_classes_;
  const ForestConfig& cfg_;
  Rng rng_;
  int mtry_;
  Tree tree_;
  std::vector<std::uint32_t> order_;
  std::vector<std::pair<float, int>> pairs_;
};

void check_dim(const Forest& f, std::span<const float> x) {
  if (x.size() != f.feature_dim) {
    fail(ErrorKind::ShapeError, "feature vector has " + std::to_string(x.size()) + " entries, forest expects " +
                                    std::to_string(f.feature_dim));
  }
}

}  // namespace

Forest train_forest(const FeatureMatrixView& features, std::span<const int> labels, const ForestConfig& cfg,
                    int n_classes) {
  cfg.validate();
  if (features.rows == 0 || features.cols == 0) fail(ErrorKind::EmptyInput, "no training data");
  if (features.values.size() != features.rows * features.cols) {
    fail(ErrorKind::ShapeError, "feature matrix size does not match its shape");
  }
  if (labels.size() != features.rows) fail(ErrorKind::ShapeError, "labels are not aligned with rows");
  const int max_label = *std::max_element(labels.begin(), labels.end());
  if (*std::min_element(labels.begin(), labels.end()) < 0) fail(ErrorKind::ShapeError, "negative class id");
  if (n_classes == 0) n_classes = max_label + 1;
  if (max_label >= n_classes) fail(ErrorKind::ShapeError, "class id exceeds n_classes");

  Forest forest;
  forest.n_classes = n_classes;
  forest.feature_dim = features.cols;
  forest.config = cfg;
  forest.trees.resize(static_cast<std::size_t>(cfg.n_estimators));
  parallel_for(forest.trees.size(), [&](std::size_t t) {
    TreeBuilder builder(features, labels, n_classes, cfg, mix_seed(cfg.seed, t));
    forest.trees[t] = builder.build();
  });
  return forest;
}

std::vector<double> predict_proba(const Forest& f, std::span<const float> x) {
  check_dim(f, x);
  std::vector<double> p(static_cast<std::size_t>(f.n_classes), 0.0);
  if (f.trees.empty()) return p;
  for (const auto& tree : f.trees) {
    const auto& leaf = tree.leaf_for(x);
    double total = 0.0;
    for (auto c : leaf.class_counts) total += c;
    if (total <= 0.0) continue;
    for (std::size_t k = 0; k < p.size(); ++k) p[k] += leaf.class_counts[k] / total;
  }
  double sum = std::accumulate(p.begin(), p.end(), 0.0);
  if (sum > 0.0) {
    for (auto& v : p) v /= sum;
  }
  return p;
}

int predict(const Forest& f, std::span<const float> x) {
  auto p = predict_proba(f, x);
  // max_element returns the first maximum, i.e. the smallest class id on ties
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

TreeStats tree_stats(const Forest& f) {
  TreeStats s;
  for (const auto& t : f.trees) {
    s.max_depth_observed = std::max(s.max_depth_observed, t.depth());
    s.total_nodes += t.nodes.size();
    s.total_leaves += static_cast<std::size_t>(
        std::count_if(t.nodes.begin(), t.nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
  }
  return s;
}

void write_forest(const Forest& f, ByteWriter& w) {
  w.u32(static_cast<std::uint32_t>(f.trees.size()));
  w.u32(static_cast<std::uint32_t>(f.n_classes));
  w.u32(static_cast<std::uint32_t>(f.feature_dim));
  w.u32(static_cast<std::uint32_t>(f.config.n_estimators));
  w.u32(static_cast<std::uint32_t>(f.config.max_depth));
  w.u64(f.config.seed);
  w.u32(static_cast<std::uint32_t>(f.config.features_per_split));
  w.u32(static_cast<std::uint32_t>(f.config.min_samples_leaf));
  for (const auto& t : f.trees) {
    w.u32(static_cast<std::uint32_t>(t.nodes.size()));
    for (const auto& n : t.nodes) {
      w.i32(n.feature);
      w.f32(n.threshold);
      w.u32(n.left);
      w.u32(n.right);
      for (int k = 0; k < f.n_classes; ++k) {
        w.u32(n.is_leaf() ? n.class_counts[static_cast<std::size_t>(k)] : 0u);
      }
    }
  }
}

Forest read_forest(ByteReader& r) {
  Forest f;
  const std::uint32_t n_trees = r.u32();
  f.n_classes = static_cast<int>(r.u32());
  f.feature_dim = r.u32();
  f.config.n_estimators = static_cast<int>(r.u32());
  f.config.max_depth = static_cast<int>(r.u32());
  f.config.seed = r.u64();
  f.config.features_per_split = static_cast<int>(r.u32());
  f.config.min_samples_leaf = static_cast<int>(r.u32());
  if (f.n_classes <= 0 || f.n_classes > (1 << 20)) fail(ErrorKind::FormatError, "bad class count");
  const std::size_t node_bytes = 16 + 4 * static_cast<std::size_t>(f.n_classes);
  for (std::uint32_t t = 0; t < n_trees; ++t) {
    Tree tree;
    const std::uint32_t n_nodes = r.u32();
    if (static_cast<std::size_t>(n_nodes) * node_bytes > r.remaining()) {
      fail(ErrorKind::FormatError, "truncated forest payload");
    }
    tree.nodes.resize(n_nodes);
    for (std::uint32_t i = 0; i < n_nodes; ++i) {
      auto& n = tree.nodes[i];
      n.feature = r.i32();
      n.threshold = r.f32();
      n.left = r.u32();
      n.right = r.u32();
      std::vector<std::uint32_t> counts(static_cast<std::size_t>(f.n_classes));
      for (auto& c : counts) c = r.u32();
      if (n.is_leaf()) {
        n.class_counts = std::move(counts);
      } else if (static_cast<std::size_t>(n.feature) >= f.feature_dim || n.left <= i || n.right <= i ||
                 n.left >= n_nodes || n.right >= n_nodes) {
        fail(ErrorKind::FormatError, "malformed tree node");
      }
    }
    if (n_nodes == 0) fail(ErrorKind::FormatError, "empty tree");
    f.trees.push_back(std::move(tree));
  }
  return f;
}

std::vector<float> to_float_features(std::span<const std::uint32_t> counts) {
  return {counts.begin(), counts.end()};
}

}  // namespace malite
