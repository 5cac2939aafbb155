#include <cmath>
#include <cstdlib>
#include <functional>
#include <random>

#include "doctest.h"
#include "malite/error.hpp"
#include "malite/forest.hpp"

using namespace malite;

namespace {

struct Data {
  std::vector<float> x;
  std::vector<int> y;
  std::size_t rows = 0;
  std::size_t cols = 0;
  FeatureMatrixView view() const { return {x, rows, cols}; }
  std::span<const float> row(std::size_t i) const { return {x.data() + i * cols, cols}; }
};

// Well separated isotropic blobs, one per class.
Data blobs(int classes, int per_class, std::size_t cols, std::uint64_t seed, double spread = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, spread);
  Data d;
  d.cols = cols;
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < per_class; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        const double center = ((j + static_cast<std::size_t>(c)) % cols == 0) ? 4.0 * (c + 1) : 0.0;
        d.x.push_back(static_cast<float>(center + noise(rng)));
      }
      d.y.push_back(c);
      ++d.rows;
    }
  return d;
}

int nearest_centroid(const Data& train, int classes, std::span<const float> q) {
  std::vector<std::vector<double>> mean(static_cast<std::size_t>(classes), std::vector<double>(train.cols, 0.0));
  std::vector<int> n(static_cast<std::size_t>(classes), 0);
  for (std::size_t i = 0; i < train.rows; ++i) {
    ++n[static_cast<std::size_t>(train.y[i])];
    for (std::size_t j = 0; j < train.cols; ++j) mean[static_cast<std::size_t>(train.y[i])][j] += train.row(i)[j];
  }
  int best = 0;
  double best_d = INFINITY;
  for (int c = 0; c < classes; ++c) {
    double dist = 0;
    for (std::size_t j = 0; j < train.cols; ++j) {
      const double m = mean[static_cast<std::size_t>(c)][j] / n[static_cast<std::size_t>(c)];
      dist += (q[j] - m) * (q[j] - m);
    }
    if (dist < best_d) best_d = dist, best = c;
  }
  return best;
}

std::vector<std::uint8_t> serialize(const Forest& f) {
  ByteWriter w;
  write_forest(f, w);
  return w.take();
}

TreeNode leaf(std::vector<std::uint32_t> counts) {
  TreeNode n;
  n.class_counts = std::move(counts);
  return n;
}

Tree stump(std::int32_t feature, float thr, std::vector<std::uint32_t> l, std::vector<std::uint32_t> r) {
  Tree t;
  TreeNode root;
  root.feature = feature;
  root.threshold = thr;
  root.left = 1;
  root.right = 2;
  t.nodes = {root, leaf(std::move(l)), leaf(std::move(r))};
  return t;
}

std::size_t count_nodes(const Tree& t, std::uint32_t i) {
  const TreeNode& n = t.nodes[i];
  return n.is_leaf() ? 1 : 1 + count_nodes(t, n.left) + count_nodes(t, n.right);
}

int depth_of(const Tree& t, std::uint32_t i) {
  const TreeNode& n = t.nodes[i];
  return n.is_leaf() ? 0 : 1 + std::max(depth_of(t, n.left), depth_of(t, n.right));
}

}  // namespace

TEST_CASE("identical labels give single-leaf trees") {
  Data d = blobs(1, 30, 4, 1);
  for (auto& y : d.y) y = 2;
  ForestConfig cfg;
  cfg.n_estimators = 5;
  Forest f = train_forest(d.view(), d.y, cfg);
  CHECK(f.n_classes == 3);
  for (const Tree& t : f.trees) CHECK(t.nodes.size() == 1);
  CHECK(predict(f, d.row(0)) == 2);
}

TEST_CASE("separable blobs agree with nearest centroid") {
  Data train = blobs(4, 40, 8, 2);
  Data test = blobs(4, 25, 8, 3);
  ForestConfig cfg;
  cfg.n_estimators = 21;
  cfg.seed = 5;
  Forest f = train_forest(train.view(), train.y, cfg);
  int agree = 0;
  for (std::size_t i = 0; i < test.rows; ++i)
    agree += predict(f, test.row(i)) == nearest_centroid(train, 4, test.row(i));
  CHECK(agree >= static_cast<int>(test.rows) - 1);
}

TEST_CASE("training is deterministic across runs and thread counts") {
  Data d = blobs(3, 50, 16, 4, 1.5);
  ForestConfig cfg;
  cfg.n_estimators = 11;
  cfg.seed = 77;
  setenv("MALITE_THREADS", "1", 1);
  const auto a = serialize(train_forest(d.view(), d.y, cfg));
  setenv("MALITE_THREADS", "4", 1);
  const auto b = serialize(train_forest(d.view(), d.y, cfg));
  const auto c = serialize(train_forest(d.view(), d.y, cfg));
  unsetenv("MALITE_THREADS");
  CHECK(a == b);
  CHECK(b == c);
  cfg.seed = 78;
  CHECK(serialize(train_forest(d.view(), d.y, cfg)) != a);
}

TEST_CASE("hand-built forest prediction") {
  Forest f;
  f.n_classes = 3;
  f.feature_dim = 2;
  f.trees = {stump(0, 0.5f, {4, 0, 0}, {0, 3, 1}), stump(1, 0.5f, {0, 0, 2}, {2, 2, 0}),
             stump(0, 0.5f, {0, 1, 0}, {1, 0, 0})};
  const std::vector<float> x{1.0f, 0.0f};
  // leaves reached: {0,3,1}, {0,0,2}, {1,0,0}
  auto p = predict_proba(f, x);
  CHECK(p[0] == doctest::Approx(1.0 / 3));
  CHECK(p[1] == doctest::Approx(0.75 / 3));
  CHECK(p[2] == doctest::Approx((0.25 + 1.0) / 3));
  CHECK(predict(f, x) == 2);
  // a value equal to the threshold goes left
  const std::vector<float> edge{0.5f, 0.5f};
  CHECK(&f.trees[0].leaf_for(edge) == &f.trees[0].nodes[1]);
}

TEST_CASE("pure leaves make prediction a majority vote") {
  Data d = blobs(3, 30, 6, 10, 2.0);
  ForestConfig cfg;
  cfg.n_estimators = 15;
  cfg.max_depth = 30;
  Forest f = train_forest(d.view(), d.y, cfg);
  for (std::size_t i = 0; i < d.rows; ++i) {
    std::vector<int> votes(3, 0);
    for (const Tree& t : f.trees) {
      const auto& counts = t.leaf_for(d.row(i)).class_counts;
      int arg = 0;
      for (int c = 1; c < 3; ++c)
        if (counts[c] > counts[arg]) arg = c;
      ++votes[arg];
    }
    const int vote = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    const auto p = predict_proba(f, d.row(i));
    const bool pure = std::all_of(f.trees.begin(), f.trees.end(), [&](const Tree& t) {
      const auto& c = t.leaf_for(d.row(i)).class_counts;
      return std::count_if(c.begin(), c.end(), [](std::uint32_t v) { return v > 0; }) == 1;
    });
    if (pure) CHECK(predict(f, d.row(i)) == vote);
  }
}

TEST_CASE("ties go to the lowest class id") {
  Forest f;
  f.n_classes = 2;
  f.feature_dim = 1;
  f.trees = {stump(0, 0.5f, {1, 0}, {1, 0}), stump(0, 0.5f, {0, 1}, {0, 1})};
  const std::vector<float> x{0.0f};
  CHECK(predict(f, x) == 0);
  std::swap(f.trees[0], f.trees[1]);
  CHECK(predict(f, x) == 0);
}

TEST_CASE("probabilities sum to one") {
  Data d = blobs(5, 20, 10, 12, 3.0);
  ForestConfig cfg;
  cfg.n_estimators = 9;
  Forest f = train_forest(d.view(), d.y, cfg);
  for (std::size_t i = 0; i < d.rows; ++i) {
    auto p = predict_proba(f, d.row(i));
    double s = 0;
    for (double v : p) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("tree stats and depth bound") {
  Data d = blobs(4, 40, 12, 13, 4.0);
  for (int depth : {1, 3, 6}) {
    ForestConfig cfg;
    cfg.n_estimators = 7;
    cfg.max_depth = depth;
    Forest f = train_forest(d.view(), d.y, cfg);
    TreeStats s = tree_stats(f);
    std::size_t nodes = 0, leaves = 0;
    int deepest = 0;
    for (const Tree& t : f.trees) {
      nodes += count_nodes(t, 0);
      for (const auto& n : t.nodes) leaves += n.is_leaf();
      deepest = std::max(deepest, depth_of(t, 0));
      CHECK(t.depth() == depth_of(t, 0));
      CHECK(count_nodes(t, 0) == t.nodes.size());
    }
    CHECK(s.total_nodes == nodes);
    CHECK(s.total_leaves == leaves);
    CHECK(s.max_depth_observed == deepest);
    CHECK(deepest <= depth);
    // a binary tree has one more leaf than internal node
    CHECK(leaves * 2 - f.trees.size() == nodes);
  }
}

TEST_CASE("monotone feature transform leaves predictions unchanged") {
  Data d = blobs(3, 40, 6, 21, 2.5);
  Data t = d;
  for (auto& v : t.x) v = 3.0f * v + 7.0f;
  ForestConfig cfg;
  cfg.n_estimators = 11;
  cfg.seed = 4;
  Forest a = train_forest(d.view(), d.y, cfg);
  Forest b = train_forest(t.view(), t.y, cfg);
  for (std::size_t i = 0; i < d.rows; ++i) CHECK(predict(a, d.row(i)) == predict(b, t.row(i)));
}

TEST_CASE("serialization round trip and validation") {
  Data d = blobs(3, 20, 5, 30);
  ForestConfig cfg;
  cfg.n_estimators = 4;
  Forest f = train_forest(d.view(), d.y, cfg);
  auto bytes = serialize(f);
  ByteReader r(bytes);
  Forest g = read_forest(r);
  CHECK(g.trees == f.trees);
  CHECK(g.n_classes == f.n_classes);
  CHECK(serialize(g) == bytes);
  bytes.resize(bytes.size() - 3);
  ByteReader bad(bytes);
  CHECK_THROWS_AS(read_forest(bad), Error);
}

TEST_CASE("invalid inputs") {
  Data d = blobs(2, 5, 3, 1);
  ForestConfig cfg;
  CHECK_THROWS_AS(train_forest({{}, 0, 3}, {}, cfg), Error);
  std::vector<int> short_labels(d.y.begin(), d.y.end() - 1);
  CHECK_THROWS_AS(train_forest(d.view(), short_labels, cfg), Error);
  cfg.n_estimators = 0;
  CHECK_THROWS_AS(train_forest(d.view(), d.y, cfg), Error);
}
