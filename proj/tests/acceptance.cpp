// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "counted.hpp"
#include "gradcheck.hpp"
#include "malite/costmodel.hpp"
#include "malite/error.hpp"
#include "malite/pipeline.hpp"
#include "malite/util.hpp"
#include "oracles.hpp"
#include "synth.hpp"

using namespace malite;
using namespace malite::testing;

namespace {

struct Outcome {
  enum class State { Pass, Fail, Skip } state;
  std::string detail;
};

Outcome pass(std::string d) { return {Outcome::State::Pass, std::move(d)}; }
Outcome fail_with(std::string d) { return {Outcome::State::Fail, std::move(d)}; }
Outcome check(bool ok, std::string d) { return ok ? pass(std::move(d)) : fail_with(std::move(d)); }

template <class... Args>
std::string cat(const Args&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

void set_threads(int n) { ::setenv("MALITE_THREADS", std::to_string(n).c_str(), 1); }

ByteImage random_gray(std::mt19937& rng, int w, int h) {
  ByteImage img;
  img.width = w;
  img.height = h;
  img.channels = 1;
  img.pixels.resize(static_cast<std::size_t>(w) * h);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng());
  return img;
}

Outcome table_conformance() {
  const std::uint64_t kb = 1024;
  const std::pair<std::uint64_t, int> bands[] = {{5, 32},   {20, 64},   {45, 128}, {80, 256},
                                                 {150, 384}, {300, 512}, {700, 768}, {5000, 1024}};
  for (const auto& [size, width] : bands)
    if (width_for_size(size * kb) != width) return fail_with(cat("band at ", size, " KB"));
  const std::uint64_t edges[] = {10, 30, 60, 100, 200, 500, 1000};
  int checked = 0;
  for (std::uint64_t e : edges)
    for (std::uint64_t b = e * kb - 64; b <= e * kb + 64; ++b, ++checked)
      if (width_for_size(b) != band_width(b)) return fail_with(cat("boundary at ", b, " bytes"));
  return pass(cat("8 bands, ", checked, " boundary sizes"));
}

Outcome feature_geometry() {
  std::mt19937 rng(1);
  const FeaturizerSettings s;
  for (int trial = 0; trial < 20; ++trial) {
    ByteImage img = random_gray(rng, 256, 256);
    if (trial == 0) std::fill(img.pixels.begin(), img.pixels.end(), 0);
    if (extract_patches(img, s.patch).size() != 16) return fail_with("patch count");
    const FeatureVector v = featurize(img, s.patch, s.hist);
    if (v.size() != 1024) return fail_with(cat("length ", v.size()));
    for (std::size_t seg = 0; seg < 16; ++seg) {
      std::uint64_t sum = 0;
      for (std::size_t i = 0; i < 64; ++i) sum += v[seg * 64 + i];
      if (sum != 8192) return fail_with(cat("segment ", seg, " sums to ", sum));
    }
  }
  return pass("16 patches, 1024 features, segments of 8192");
}

Outcome histogram_oracle() {
  std::mt19937 rng(2);
  const PatchSpec specs[] = {{32, 256, 0.5}, {16, 16, 0.5}, {64, 64, 0.0}, {8, 32, 0.75}};
  const int bins_options[] = {64, 16, 256, 32};
  for (int trial = 0; trial < 100; ++trial) {
    const int w = 32 << (rng() % 4);
    const int h = 64 * (1 + static_cast<int>(rng() % 4));
    const ByteImage img = random_gray(rng, w, h);
    PatchSpec spec = specs[trial % 4];
    spec.pw = std::min(spec.pw, w);
    const int bins = bins_options[trial % 4];
    const FeatureVector got = featurize(img, spec, {bins});
    const auto want = brute_force(img, spec.ph, spec.pw, spec.overlap, bins);
    if (got != want) return fail_with(cat("image ", trial));
  }
  return pass("100 random images match");
}

Outcome hrf_cost() {
  const std::uint64_t h = hist_cost(16, 32, 256), f = forest_cost(51, 15);
  const CostReport r = report(FeaturizerSettings{}, ForestConfig{});
  const double millions = std::round(static_cast<double>(r.mult_adds) / 1e4) / 100;
  return check(h == 131072 && f == 765 && r.mult_adds == h + f && millions == kPublishedCosts[0].mult_adds_m,
               cat("hist ", h, ", forest ", f, ", total ", millions, "M"));
}

Outcome mn_budget() {
  const NetConfig cfg = NetConfig::malite_default(10, 1);
  const CostReport r = report(cfg, 256);
  const double dp = r.params / (kPublishedCosts[1].params_m * 1e6) - 1.0;
  const double dm = r.mult_adds / (kPublishedCosts[1].mult_adds_m * 1e6) - 1.0;
  if (std::abs(dp) > 0.05 || std::abs(dm) > 0.05)
    return fail_with(cat("params ", r.params, ", mult-adds ", r.mult_adds));
  const auto counted = count_forward(cfg, 16);
  std::uint64_t model_total = 0, counted_total = 0;
  for (const LayerCost& l : network_layers(cfg, 16)) {
    model_total += l.mult_adds;
    if (l.mult_adds == 0) continue;
    auto it = counted.find(l.name);
    if (it == counted.end() || it->second != l.mult_adds) return fail_with(cat("layer ", l.name));
  }
  for (const auto& [name, n] : counted) counted_total += n;
  if (counted_total != model_total) return fail_with("instrumented total");
  return pass(cat("params ", r.params, " (", dp * 100, "%), mult-adds ", r.mult_adds, " (", dm * 100,
                  "%), 16x16 count ", counted_total));
}

Outcome separable() {
  const double at64 = separable_reduction(64), at1024 = separable_reduction(1024);
  return check(std::abs(at64 - 576.0 / 73.0) < 1e-9 && std::abs(at1024 - 9.0) / 9.0 < 0.1 &&
                   separable_reduction(1 << 20) > at1024,
               cat("C=64 ", at64, ", C=1024 ", at1024));
}

Outcome gradients() {
  std::mt19937_64 rng(7);
  double worst = 0;
  int shapes = 0;
  auto take = [&](const std::vector<double>& errors) {
    for (double e : errors) worst = std::max(worst, e);
    ++shapes;
  };
  for (const auto& s : gradcheck_shapes()) take(conv_errors(s, rng));
  for (const auto& s : gradcheck_shapes()) take(depthwise_errors(s, rng));
  for (const auto& s : gradcheck_shapes()) take(batch_norm_errors(s, rng));
  for (const auto& b : gradcheck_blocks()) take(bottleneck_errors(b, rng));
  for (const auto& [n, in, out] : classifier_shapes()) take(classifier_errors(n, in, out, rng));
  return check(worst < 1e-3, cat(shapes, " shapes, worst relative error ", worst));
}

Outcome toy_hrf() {
  TempDir dir("accept_hrf");
  const Manifest m = dominant_byte_dataset(dir.root, 3, 100, 8);
  const Split split = stratified_split(m, {0.8, 1, true});
  const FeaturizerSettings s;
  const HrfModel model = train_hrf(featurize_manifest(split.train, s), s, ForestConfig{});
  const EvalReport r = evaluate_hrf(model, featurize_manifest(split.eval, s), "holdout 80/20");
  return check(m.size() == 300 && r.metrics.accuracy >= 0.99,
               cat("accuracy ", r.metrics.accuracy, " on ", split.eval.size(), " held-out samples"));
}

MnDataset mn_data(const Manifest& m, const std::vector<std::string>& labels, int side) {
  std::vector<std::string> names;
  for (const auto& e : m.entries()) names.push_back(e.label);
  return make_mn_dataset(load_images(m, false, side), encode_labels(names, labels));
}

MnTrainOptions toy_mn_options() {
  MnTrainOptions o;
  o.side = 64;
  o.net = NetConfig::malite_default(2, 1).scaled(0.25);
  o.train.lr_start = 1e-3;
  o.train.lr_end = 1e-4;
  o.train.warmup_steps = 10;
  o.train.epochs = 10;
  o.train.batch_size = 16;
  o.train.seed = 1;
  return o;
}

Outcome toy_mn() {
  TempDir dir("accept_mn");
  const Manifest m = texture_vs_noise_dataset(dir.root, 100, 9);
  const Split split = stratified_split(m, {0.8, 1, true});
  const MnTrainOptions o = toy_mn_options();
  const auto start = std::chrono::steady_clock::now();
  MnModel model = train_mn(mn_data(split.train, split.train.labels(), o.side), split.train.labels(), o);
  const EvalReport r = evaluate_mn(model, mn_data(split.eval, model.labels, o.side), "holdout 80/20");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return check(m.size() == 200 && r.metrics.accuracy >= 0.95 && secs < 600,
               cat("accuracy ", r.metrics.accuracy, " after ", o.train.epochs, " epochs in ", secs, " s"));
}

struct RunBytes {
  std::vector<std::uint8_t> model;
  std::string report;
};

RunBytes hrf_run(const Manifest& train, const Manifest& eval) {
  FeaturizerSettings s;
  s.side = 128;
  s.patch = {32, 128, 0.5};
  ForestConfig fc;
  fc.n_estimators = 31;
  fc.seed = 42;
  const HrfModel m = train_hrf(featurize_manifest(train, s), s, fc);
  return {save_model(m), evaluate_hrf(m, featurize_manifest(eval, s), "holdout").to_json()};
}

RunBytes mn_run(const Manifest& train, const Manifest& eval) {
  MnTrainOptions o = toy_mn_options();
  o.side = 32;
  o.train.epochs = 2;
  o.train.seed = 42;
  MnModel m = train_mn(mn_data(train, train.labels(), o.side), train.labels(), o);
  return {save_model(m), evaluate_mn(m, mn_data(eval, m.labels, o.side), "holdout").to_json()};
}

Outcome determinism() {
  TempDir dir("accept_det");
  const Manifest hm = dominant_byte_dataset(dir.root / "hrf", 3, 20, 10);
  const Split hs = stratified_split(hm, {0.8, 3, true});
  const Manifest nm = texture_vs_noise_dataset(dir.root / "mn", 16, 11);
  const Split ns = stratified_split(nm, {0.8, 3, true});
  std::vector<RunBytes> hrf, mn;
  for (int threads : {1, 4, 1, 4}) {
    set_threads(threads);
    hrf.push_back(hrf_run(hs.train, hs.eval));
    mn.push_back(mn_run(ns.train, ns.eval));
  }
  ::unsetenv("MALITE_THREADS");
  for (std::size_t i = 1; i < hrf.size(); ++i) {
    if (hrf[i].model != hrf[0].model || hrf[i].report != hrf[0].report) return fail_with(cat("hrf run ", i));
    if (mn[i].model != mn[0].model || mn[i].report != mn[0].report) return fail_with(cat("mn run ", i));
  }
  return pass(cat("4 runs each, hrf ", hrf[0].model.size(), " bytes, mn ", mn[0].model.size(), " bytes"));
}

Outcome malimg() {
  const char* root = std::getenv("MALITE_MALIMG_DIR");
  if (root == nullptr || !std::filesystem::is_directory(root))
    return {Outcome::State::Skip, "set MALITE_MALIMG_DIR to a directory of per-family sample files"};
  const Manifest m = scan_dir(root);
  const Split split = stratified_split(m, {0.8, 1, true});
  const FeaturizerSettings s;
  const HrfModel model = train_hrf(featurize_manifest(split.train, s), s, ForestConfig{});
  const EvalReport r = evaluate_hrf(model, featurize_manifest(split.eval, s), "holdout 80/20");
  return check(r.metrics.accuracy >= 0.93,
               cat("accuracy ", r.metrics.accuracy, " over ", m.class_count(), " families"));
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"width bands", table_conformance},
      {"feature geometry", feature_geometry},
      {"histogram oracle", histogram_oracle},
      {"hrf cost", hrf_cost},
      {"mn budget", mn_budget},
      {"separable reduction", separable},
      {"gradient checks", gradients},
      {"toy hrf", toy_hrf},
      {"toy mn", toy_mn},
      {"determinism", determinism},
      {"malimg hrf", malimg},
  };
  int failures = 0, index = 0;
  for (const auto& [name, run] : criteria) {
    ++index;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = fail_with(cat("exception: ", e.what()));
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const char* tag = o.state == Outcome::State::Pass ? "PASS" : (o.state == Outcome::State::Fail ? "FAIL" : "SKIP");
    if (o.state == Outcome::State::Fail) ++failures;
    std::cout << tag << ' ' << index << ' ' << name << ": " << o.detail << " [" << cat(std::round(secs * 10) / 10)
              << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
