// malite: byteplot conversion, patch-histogram forest and bottleneck CNN
// training/evaluation, parameter sweeps, and cost accounting.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "malite/byteplot.hpp"
#include "malite/container.hpp"
#include "malite/costmodel.hpp"
#include "malite/data.hpp"
#include "malite/featurizer.hpp"
#include "malite/pipeline.hpp"
#include "malite/sweep.hpp"
#include "malite/util.hpp"

namespace fs = std::filesystem;
using namespace malite;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NumericalError: return kExitNumeric;
    case ErrorKind::InvalidConfig:
    case ErrorKind::InvalidPatchSpec: return kExitUsage;
    default: return kExitData;
  }
}

void report_error(std::string_view kind, std::string_view message) {
  nlohmann::json j{{"error", kind}, {"message", message}};
  std::cerr << j.dump() << std::endl;
}

void write_text(const std::string& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

bool is_feature_csv(const std::string& path) {
  std::error_code ec;
  if (fs::is_directory(path, ec)) return false;
  std::ifstream in(path);
  std::string first;
  std::getline(in, first);
  return first.starts_with("# malite-features") || first.starts_with("path,label,f0");
}

struct ConvertArgs {
  std::string in, out;
  bool rgb = false;
  int side = 0;
  bool png = false;
};

void run_convert(const ConvertArgs& a) {
  ByteImage img = load_byteplot(a.in, a.rgb, a.side);
  write_file(a.out, a.png ? encode_png(img) : encode_raw(img));
  std::cout << a.out << ": " << img.width << "x" << img.height << (img.channels == 3 ? " rgb" : " gray") << '\n';
}

struct FeaturizeArgs {
  std::string input, out, binary;
  FeaturizerSettings settings;
};

void run_featurize(const FeaturizeArgs& a) {
  Manifest m = load_manifest(a.input);
  FeatureTable t = featurize_manifest(m, a.settings);
  write_text(a.out, write_features_csv(t, a.settings));
  if (!a.binary.empty()) write_file(a.binary, encode_features_binary(t));
  std::cout << "featurized " << t.rows() << " files into " << t.cols << " features\n";
}

struct TrainHrfArgs {
  std::string features, model;
  ForestConfig forest;
};

void run_train_hrf(const TrainHrfArgs& a) {
  FeaturizerSettings settings;
  FeatureTable t = read_features_csv(read_text_file(a.features), &settings);
  HrfModel m = train_hrf(t, settings, a.forest);
  auto bytes = save_model(m);
  write_file(a.model, bytes);
  auto stats = tree_stats(m.forest);
  std::cout << "trained " << m.forest.trees.size() << " trees on " << t.rows() << " samples ("
            << m.labels.size() << " classes), " << stats.total_nodes << " nodes, max depth "
            << stats.max_depth_observed << ", " << bytes.size() << " bytes\n";
}

struct TrainMnArgs {
  std::string manifest, model, config;
  MnTrainOptions opts;
  bool rgb = false;
  double width = 1.0;
};

void run_train_mn(TrainMnArgs a) {
  if (!a.config.empty()) a.opts.net = net_config_from_json(read_text_file(a.config));
  a.opts.net.input_channels = a.rgb ? 3 : 1;
  if (a.width != 1.0) a.opts.net = a.opts.net.scaled(a.width);
  Manifest m = load_manifest(a.manifest);
  auto images = load_images(m, a.rgb, a.opts.side);
  MnDataset data = make_mn_dataset(images, m.class_ids());
  MnModel model = train_mn(data, m.labels(), a.opts, [](int epoch, double loss) {
    std::cerr << "epoch " << epoch << " loss " << loss << '\n';
  });
  auto bytes = save_model(model);
  write_file(a.model, bytes);
  std::cout << "trained network on " << m.size() << " samples, " << bytes.size() << " bytes\n";
}

struct EvalArgs {
  std::string model, data, report;
};

void run_eval(const EvalArgs& a) {
  AnyModel any = load_model(read_file(a.model));
  EvalReport r;
  if (auto* hrf = std::get_if<HrfModel>(&any)) {
    if (is_feature_csv(a.data)) {
      FeaturizerSettings settings;
      FeatureTable t = read_features_csv(read_text_file(a.data), &settings);
      if (!(settings == hrf->features)) {
        fail(ErrorKind::FormatError, "feature table settings differ from the model's featurizer");
      }
      r = evaluate_hrf(*hrf, t, "holdout: precomputed features");
    } else {
      FeatureTable t = featurize_manifest(load_manifest(a.data), hrf->features);
      r = evaluate_hrf(*hrf, t, "holdout: featurized from manifest");
    }
  } else {
    auto& mn = std::get<MnModel>(any);
    Manifest m = load_manifest(a.data);
    auto images = load_images(m, mn.rgb(), mn.side);
    std::vector<std::string> names;
    for (const auto& e : m.entries()) names.push_back(e.label);
    MnDataset data = make_mn_dataset(images, encode_labels(names, mn.labels));
    r = evaluate_mn(mn, data, "holdout: manifest");
  }
  std::cout << metrics_table(r.metrics, r.labels);
  if (!a.report.empty()) write_text(a.report, r.to_json() + "\n");
}

struct SweepArgs {
  std::string manifest, out, train_split, eval_split;
  SweepGrid grid;
  SweepOptions opts;
  SplitSpec split;
};

void run_sweep(const SweepArgs& a) {
  Manifest train, eval;
  if (!a.train_split.empty() || !a.eval_split.empty()) {
    if (a.train_split.empty() || a.eval_split.empty()) {
      fail(ErrorKind::InvalidConfig, "--train-split and --eval-split go together");
    }
    train = load_manifest(a.train_split);
    eval = load_manifest(a.eval_split);
  } else {
    Split s = stratified_split(load_manifest(a.manifest), a.split);
    train = std::move(s.train);
    eval = std::move(s.eval);
  }
  SweepResult r = sweep_hrf(train, eval, a.grid, a.opts);
  write_text(a.out, r.to_csv());
  for (const auto& [p, why] : r.skipped) std::cerr << "skipped " << p.label() << " e" << p.estimators << ": " << why << '\n';
  std::cout << r.rows.size() << " grid points evaluated, " << r.skipped.size() << " skipped\n";
  if (!r.rows.empty()) {
    const auto& best = r.rows.front();
    std::cout << "best " << best.point.label() << " RF" << best.point.estimators << " macro F1 "
              << best.metrics.macro_f1 << " accuracy " << best.metrics.accuracy << '\n';
  }
}

struct CostArgs {
  std::string target;
  int side = kDefaultSide;
  int classes = 10;
  bool json = false;
};

void run_cost(const CostArgs& a) {
  CostReport r;
  if (a.target == "default-mn") {
    r = report(NetConfig::malite_default(a.classes), a.side);
  } else if (a.target == "default-hrf") {
    r = report(FeaturizerSettings{}, ForestConfig{});
  } else {
    auto bytes = read_file(a.target);
    if (looks_like_container(bytes)) {
      AnyModel any = load_model(bytes);
      r = std::visit([](const auto& m) { return report(m); }, any);
    } else {
      NetConfig cfg = net_config_from_json(std::string(bytes.begin(), bytes.end()));
      r = report(cfg, a.side);
    }
  }
  std::cout << (a.json ? r.to_json() + "\n" : r.to_table());
}

struct SplitArgs {
  std::string manifest, train_out, eval_out;
  SplitSpec spec;
  std::size_t min_samples = 0;
  std::size_t top_k = 0;
};

void run_split(const SplitArgs& a) {
  Manifest m = load_manifest(a.manifest);
  if (a.min_samples > 0) m = filter_min_samples(m, a.min_samples);
  if (a.top_k > 0) m = top_k_classes(m, a.top_k);
  Split s = stratified_split(m, a.spec);
  write_text(a.train_out, write_manifest_csv(s.train));
  write_text(a.eval_out, write_manifest_csv(s.eval));
  std::cout << s.train.size() << " train / " << s.eval.size() << " eval samples over " << m.class_count()
            << " classes\n";
}

struct ManifestArgs {
  std::string root, out;
  std::size_t min_samples = 0;
  std::size_t top_k = 0;
};

void run_manifest(const ManifestArgs& a) {
  Manifest m = load_manifest(a.root);
  if (a.min_samples > 0) m = filter_min_samples(m, a.min_samples);
  if (a.top_k > 0) m = top_k_classes(m, a.top_k);
  write_text(a.out, write_manifest_csv(m));
  std::cout << m.size() << " files in " << m.class_count() << " classes\n";
}

void add_featurizer_flags(CLI::App* cmd, FeaturizerSettings& s) {
  cmd->add_option("--bins", s.hist.bins, "histogram bins")->capture_default_str();
  cmd->add_option("--ph", s.patch.ph, "patch height")->capture_default_str();
  cmd->add_option("--pw", s.patch.pw, "patch width")->capture_default_str();
  cmd->add_option("--overlap", s.patch.overlap, "vertical window overlap fraction")->capture_default_str();
  cmd->add_option("--side", s.side, "square image side after resizing")->capture_default_str();
  cmd->add_flag("--rgb", s.rgb, "RGB byteplot instead of gray");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"malite: lightweight malware image classification toolkit"};
  app.require_subcommand(1);

  ConvertArgs convert;
  auto* c = app.add_subcommand("convert", "binary file -> byteplot image (raw MLIM dump or PNG)");
  c->add_option("in", convert.in)->required();
  c->add_option("out", convert.out)->required();
  c->add_flag("--rgb", convert.rgb);
  c->add_option("--side", convert.side, "resize to side x side (0 keeps the native size)")->capture_default_str();
  c->add_flag("--png", convert.png);

  FeaturizeArgs featurize_args;
  auto* f = app.add_subcommand("featurize", "patch-histogram feature table from a directory or manifest");
  f->add_option("input", featurize_args.input)->required();
  f->add_option("out", featurize_args.out)->required();
  f->add_option("--binary", featurize_args.binary, "also write the packed MLFV matrix");
  add_featurizer_flags(f, featurize_args.settings);

  TrainHrfArgs hrf;
  auto* th = app.add_subcommand("train-hrf", "train the histogram random forest");
  th->add_option("features", hrf.features)->required();
  th->add_option("model", hrf.model)->required();
  th->add_option("--estimators", hrf.forest.n_estimators)->capture_default_str();
  th->add_option("--depth", hrf.forest.max_depth)->capture_default_str();
  th->add_option("--seed", hrf.forest.seed)->capture_default_str();
  th->add_option("--features-per-split", hrf.forest.features_per_split, "0 = sqrt(dim)")->capture_default_str();

  TrainMnArgs mn;
  auto* tm = app.add_subcommand("train-mn", "train the bottleneck CNN");
  tm->add_option("manifest", mn.manifest)->required();
  tm->add_option("model", mn.model)->required();
  tm->add_option("--config", mn.config, "network config JSON");
  tm->add_option("--epochs", mn.opts.train.epochs)->capture_default_str();
  tm->add_option("--seed", mn.opts.train.seed)->capture_default_str();
  tm->add_option("--batch", mn.opts.train.batch_size)->capture_default_str();
  tm->add_option("--lr-start", mn.opts.train.lr_start)->capture_default_str();
  tm->add_option("--lr-end", mn.opts.train.lr_end)->capture_default_str();
  tm->add_option("--warmup", mn.opts.train.warmup_steps)->capture_default_str();
  tm->add_option("--side", mn.opts.side)->capture_default_str();
  tm->add_option("--width", mn.width, "channel width multiplier")->capture_default_str();
  tm->add_flag("--rgb", mn.rgb);

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "score a model on a manifest, directory, or feature table");
  e->add_option("model", eval.model)->required();
  e->add_option("data", eval.data)->required();
  e->add_option("--report", eval.report, "write the JSON report here");

  SweepArgs sweep;
  auto* s = app.add_subcommand("sweep", "bin-ph-pw x estimators grid for the histogram forest");
  s->add_option("manifest", sweep.manifest, "dataset directory or manifest (split internally)")->required();
  s->add_option("out", sweep.out)->required();
  s->add_option("--bins", sweep.grid.bins)->capture_default_str();
  s->add_option("--ph", sweep.grid.heights)->capture_default_str();
  s->add_option("--estimators", sweep.grid.estimators)->capture_default_str();
  s->add_option("--side", sweep.grid.side)->capture_default_str();
  s->add_option("--depth", sweep.opts.max_depth)->capture_default_str();
  s->add_option("--overlap", sweep.opts.overlap)->capture_default_str();
  s->add_option("--seed", sweep.opts.seed)->capture_default_str();
  s->add_option("--train-fraction", sweep.split.train_fraction)->capture_default_str();
  s->add_option("--train-split", sweep.train_split, "use an existing train manifest");
  s->add_option("--eval-split", sweep.eval_split, "use an existing eval manifest");
  s->add_flag("--rgb", sweep.opts.rgb);

  CostArgs cost;
  auto* co = app.add_subcommand("cost", "parameters, Mult-Adds and size of a model, config, or built-in default");
  co->add_option("target", cost.target, "model file, config JSON, default-mn or default-hrf")->required();
  co->add_option("--side", cost.side)->capture_default_str();
  co->add_option("--classes", cost.classes)->capture_default_str();
  co->add_flag("--json", cost.json, "emit JSON instead of a table");

  SplitArgs split;
  auto* sp = app.add_subcommand("split", "stratified train/eval manifests");
  sp->add_option("manifest", split.manifest)->required();
  sp->add_option("train", split.train_out)->required();
  sp->add_option("eval", split.eval_out)->required();
  sp->add_option("--train-fraction", split.spec.train_fraction)->capture_default_str();
  sp->add_option("--seed", split.spec.seed)->capture_default_str();
  sp->add_option("--min-samples", split.min_samples, "keep classes with more than N samples");
  sp->add_option("--top-k", split.top_k, "keep the K largest classes");
  bool no_stratify = false;
  sp->add_flag("--no-stratify", no_stratify);

  ManifestArgs manifest;
  auto* mf = app.add_subcommand("manifest", "write a path,label,bytes manifest for a class-per-directory tree");
  mf->add_option("root", manifest.root)->required();
  mf->add_option("out", manifest.out)->required();
  mf->add_option("--min-samples", manifest.min_samples, "keep classes with more than N samples");
  mf->add_option("--top-k", manifest.top_k, "keep the K largest classes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    report_error("UsageError", ex.what());
    return kExitUsage;
  }

  try {
    if (*c) run_convert(convert);
    else if (*f) run_featurize(featurize_args);
    else if (*th) run_train_hrf(hrf);
    else if (*tm) run_train_mn(mn);
    else if (*e) run_eval(eval);
    else if (*s) run_sweep(sweep);
    else if (*co) run_cost(cost);
    else if (*sp) {
      split.spec.stratified = !no_stratify;
      run_split(split);
    } else if (*mf) run_manifest(manifest);
  } catch (const Error& ex) {
    report_error(to_string(ex.kind()), ex.what());
    return exit_code_for(ex.kind());
  } catch (const std::exception& ex) {
    report_error("IoError", ex.what());
    return kExitData;
  }
  return kExitOk;
}
