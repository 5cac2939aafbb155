#pragma once

#include <functional>
#include <string>
#include <vector>

#include "malite/byteplot.hpp"
#include "malite/container.hpp"
#include "malite/data.hpp"
#include "malite/featurizer.hpp"
#include "malite/forest.hpp"
#include "malite/metrics.hpp"
#include "malite/net.hpp"

namespace malite {

/// Reads a file and returns its byteplot, resized to side x side when
/// side > 0.
ByteImage load_byteplot(const std::string& path, bool rgb, int side);

/// Byteplots for every manifest entry, in manifest order.
std::vector<ByteImage> load_images(const Manifest& m, bool rgb, int side);

FeatureTable featurize_images(const std::vector<ByteImage>& images, const Manifest& m,
                              const FeaturizerSettings& settings);
FeatureTable featurize_manifest(const Manifest& m, const FeaturizerSettings& settings);

/// Maps label strings onto ids of `classes`; unknown labels raise FormatError.
std::vector<int> encode_labels(const std::vector<std::string>& labels, const std::vector<std::string>& classes);
std::vector<std::string> sorted_labels(const std::vector<std::string>& labels);

HrfModel train_hrf(const FeatureTable& table, const FeaturizerSettings& settings, const ForestConfig& cfg);
std::vector<int> predict_hrf(const HrfModel& m, const FeatureTable& table);

struct EvalReport {
  std::string model_kind;
  std::string protocol;
  std::vector<std::string> labels;
  Metrics metrics;

  std::string to_json() const;
};

EvalReport evaluate_hrf(const HrfModel& m, const FeatureTable& table, const std::string& protocol);

struct MnDataset {
  std::vector<Tensor<float>> images;  // each (1, side, side, c)
  std::vector<int> labels;
};

MnDataset make_mn_dataset(const std::vector<ByteImage>& images, std::vector<int> labels);

struct MnTrainOptions {
  NetConfig net = NetConfig::malite_default();
  TrainConfig train;
  int side = kDefaultSide;
};

/// Called once per epoch with (epoch, mean training loss).
using EpochCallback = std::function<void(int, double)>;

MnModel train_mn(const MnDataset& data, std::vector<std::string> labels, const MnTrainOptions& opts,
                 const EpochCallback& on_epoch = {});
std::vector<int> predict_mn(MnModel& m, const MnDataset& data, std::size_t batch = 32);
EvalReport evaluate_mn(MnModel& m, const MnDataset& data, const std::string& protocol);

/// Stacks the listed samples into one batch.
Batch make_batch(const MnDataset& data, std::span<const std::size_t> order);

}  // namespace malite
