#include "malite/pipeline.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "json.hpp"
#include "malite/util.hpp"

namespace malite {

ByteImage load_byteplot(const std::string& path, bool rgb, int side) {
  auto bytes = read_file(path);
  if (bytes.empty()) fail(ErrorKind::EmptyInput, path + " is empty");
  ByteImage img = rgb ? to_rgb_image(bytes) : to_gray_image(bytes);
  return side > 0 ? resize_square(img, side) : img;
}

std::vector<ByteImage> load_images(const Manifest& m, bool rgb, int side) {
  std::vector<ByteImage> images(m.size());
  parallel_for(m.size(), [&](std::size_t i) { images[i] = load_byteplot(m.entries()[i].path, rgb, side); });
  return images;
}

FeatureTable featurize_images(const std::vector<ByteImage>& images, const Manifest& m,
                              const FeaturizerSettings& settings) {
  if (images.size() != m.size()) fail(ErrorKind::ShapeError, "image count does not match manifest");
  std::vector<FeatureVector> rows(images.size());
  parallel_for(images.size(), [&](std::size_t i) { rows[i] = featurize(images[i], settings.patch, settings.hist); });
  FeatureTable t;
  for (std::size_t i = 0; i < rows.size(); ++i) t.append(m.entries()[i].path, m.entries()[i].label, rows[i]);
  return t;
}

FeatureTable featurize_manifest(const Manifest& m, const FeaturizerSettings& settings) {
  settings.hist.validate();
  settings.patch.validate(settings.side, settings.side);
  std::vector<FeatureVector> rows(m.size());
  parallel_for(m.size(), [&](std::size_t i) {
    ByteImage img = load_byteplot(m.entries()[i].path, settings.rgb, settings.side);
    rows[i] = featurize(img, settings.patch, settings.hist);
  });
  FeatureTable t;
  for (std::size_t i = 0; i < rows.size(); ++i) t.append(m.entries()[i].path, m.entries()[i].label, rows[i]);
  return t;
}

std::vector<std::string> sorted_labels(const std::vector<std::string>& labels) {
  std::set<std::string> s(labels.begin(), labels.end());
  return {s.begin(), s.end()};
}

std::vector<int> encode_labels(const std::vector<std::string>& labels, const std::vector<std::string>& classes) {
  std::vector<int> ids;
  ids.reserve(labels.size());
  for (const auto& l : labels) {
    auto it = std::find(classes.begin(), classes.end(), l);
    if (it == classes.end()) fail(ErrorKind::FormatError, "label '" + l + "' is unknown to the model");
    ids.push_back(static_cast<int>(it - classes.begin()));
  }
  return ids;
}

HrfModel train_hrf(const FeatureTable& table, const FeaturizerSettings& settings, const ForestConfig& cfg) {
  if (table.rows() == 0) fail(ErrorKind::EmptyDataset, "no training rows");
  HrfModel m;
  m.features = settings;
  m.labels = sorted_labels(table.labels);
  auto y = encode_labels(table.labels, m.labels);
  std::vector<float> x = to_float_features(table.values);
  m.forest = train_forest({x, table.rows(), table.cols}, y, cfg, static_cast<int>(m.labels.size()));
  return m;
}

std::vector<int> predict_hrf(const HrfModel& m, const FeatureTable& table) {
  std::vector<int> out(table.rows());
  parallel_for(table.rows(), [&](std::size_t i) {
    auto x = to_float_features(table.row(i));
    out[i] = predict(m.forest, x);
  });
  return out;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["model_kind"] = model_kind;
  j["protocol"] = protocol;
  j["labels"] = labels;
  j["metrics"] = nlohmann::ordered_json::parse(metrics_json(metrics, labels));
  return j.dump(2);
}

EvalReport evaluate_hrf(const HrfModel& m, const FeatureTable& table, const std::string& protocol) {
  EvalReport r;
  r.model_kind = "hrf";
  r.protocol = protocol;
  r.labels = m.labels;
  auto truth = encode_labels(table.labels, m.labels);
  auto pred = predict_hrf(m, table);
  r.metrics = compute_metrics(pred, truth, static_cast<int>(m.labels.size()));
  return r;
}

MnDataset make_mn_dataset(const std::vector<ByteImage>& images, std::vector<int> labels) {
  if (images.size() != labels.size()) fail(ErrorKind::ShapeError, "images and labels differ in length");
  MnDataset d;
  d.labels = std::move(labels);
  for (const auto& img : images) d.images.push_back(image_tensor(img.pixels, img.height, img.width, img.channels));
  return d;
}

Batch make_batch(const MnDataset& data, std::span<const std::size_t> order) {
  if (order.empty()) fail(ErrorKind::EmptyInput, "empty batch");
  const Shape one = data.images[order[0]].shape;
  Batch b;
  b.images = Tensor<float>(Shape{static_cast<int>(order.size()), one.h, one.w, one.c});
  const std::size_t stride = one.size();
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& src = data.images[order[i]];
    check_shape(src.shape == one, "batch images differ in shape");
    std::copy(src.data.begin(), src.data.end(), b.images.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
    b.labels.push_back(data.labels[order[i]]);
  }
  return b;
}

MnModel train_mn(const MnDataset& data, std::vector<std::string> labels, const MnTrainOptions& opts,
                 const EpochCallback& on_epoch) {
  if (data.images.empty()) fail(ErrorKind::EmptyDataset, "no training images");
  opts.train.validate();
  NetConfig cfg = opts.net;
  cfg.classes = static_cast<int>(labels.size());
  MnModel model(cfg, opts.side, std::move(labels));
  model.net.initialize(opts.train.seed);

  const std::size_t n = data.images.size();
  const auto bs = static_cast<std::size_t>(opts.train.batch_size);
  const long steps_per_epoch = static_cast<long>((n + bs - 1) / bs);
  Trainer trainer(model.net, opts.train, steps_per_epoch * opts.train.epochs);

  std::vector<std::size_t> order(n);
  for (int epoch = 0; epoch < opts.train.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(opts.train.seed, static_cast<std::uint64_t>(epoch) + 1));
    shuffle(order, rng);
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t count = std::min(bs, n - start);
      Batch b = make_batch(data, std::span<const std::size_t>(order).subspan(start, count));
      total += trainer.train_step(b) * static_cast<double>(count);
    }
    if (on_epoch) on_epoch(epoch, total / static_cast<double>(n));
  }
  return model;
}

std::vector<int> predict_mn(MnModel& m, const MnDataset& data, std::size_t batch) {
  std::vector<int> out;
  std::vector<std::size_t> order(data.images.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t start = 0; start < order.size(); start += batch) {
    const std::size_t count = std::min(batch, order.size() - start);
    Batch b = make_batch(data, std::span<const std::size_t>(order).subspan(start, count));
    auto p = predict(m.net, b.images);
    out.insert(out.end(), p.classes.begin(), p.classes.end());
  }
  return out;
}

EvalReport evaluate_mn(MnModel& m, const MnDataset& data, const std::string& protocol) {
  EvalReport r;
  r.model_kind = "mn";
  r.protocol = protocol;
  r.labels = m.labels;
  auto pred = predict_mn(m, data);
  r.metrics = compute_metrics(pred, data.labels, static_cast<int>(m.labels.size()));
  return r;
}

}  // namespace malite
