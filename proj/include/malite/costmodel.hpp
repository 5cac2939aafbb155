#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "malite/container.hpp"
#include "malite/net.hpp"

namespace malite {

/// Parameter and multiply-accumulate counts for one layer or block.
/// Mult-Adds count one per scalar multiply; biases and batch norm add none.
struct Cost {
  std::uint64_t params = 0;
  std::uint64_t mult_adds = 0;

  Cost& operator+=(const Cost& o) {
    params += o.params;
    mult_adds += o.mult_adds;
    return *this;
  }
  friend bool operator==(const Cost&, const Cost&) = default;
};

struct LayerCost {
  std::string name;
  std::uint64_t params = 0;
  std::uint64_t mult_adds = 0;
};

struct CostReport {
  std::uint64_t params = 0;
  std::uint64_t mult_adds = 0;
  std::uint64_t size_bytes = 0;
  std::vector<LayerCost> breakdown;
  std::vector<std::pair<std::string, std::string>> notes;

  /// Totals are always the sum of the breakdown.
  static CostReport from_layers(std::vector<LayerCost> layers, std::uint64_t size_bytes);

  std::string to_json() const;
  std::string to_table() const;
};

Cost conv_cost(std::uint64_t h_out, std::uint64_t w_out, std::uint64_t cin, std::uint64_t cout, std::uint64_t k,
               bool bias = false);
Cost depthwise_cost(std::uint64_t h_out, std::uint64_t w_out, std::uint64_t channels, std::uint64_t k);
Cost batch_norm_cost(std::uint64_t channels);
Cost dense_cost(std::uint64_t in, std::uint64_t out);

/// Expand + depthwise + project (with the three batch norms) at input h x w.
Cost bottleneck_cost(std::uint64_t h, std::uint64_t w, const BottleneckSpec& spec);
std::vector<LayerCost> bottleneck_layers(const std::string& name, std::uint64_t h, std::uint64_t w,
                                         const BottleneckSpec& spec);

/// Histogram extraction touches every sample of every patch once.
std::uint64_t hist_cost(std::uint64_t n_patches, std::uint64_t ph, std::uint64_t pw);
/// Upper bound on forest comparisons: one per level per tree.
std::uint64_t forest_cost(std::uint64_t estimators, std::uint64_t height);

/// Dense k x k conv cost divided by depthwise k x k + pointwise cost, both
/// with C input and C output channels.
double separable_reduction(std::uint64_t channels, std::uint64_t k = 3);

/// Per-layer costs of a network at side x side input (no size measurement).
std::vector<LayerCost> network_layers(const NetConfig& cfg, int side);

CostReport report(const HrfModel& m);
CostReport report(const MnModel& m);
/// Bound for an untrained forest: full-depth trees, no size measurement.
CostReport report(const FeaturizerSettings& features, const ForestConfig& forest);
/// Builds a zero-initialised model for the config to measure its container.
CostReport report(const NetConfig& cfg, int side = 256);

struct ReferenceCost {
  const char* model;
  double params_m;
  double mult_adds_m;
  double size_mb;
};

/// Published comparison figures (256x256 input, 10 classes). The baselines
/// are not modelled; they are listed for side-by-side reports only.
inline constexpr ReferenceCost kPublishedCosts[] = {
    {"MALITE-HRF", 0.01, 0.13, 0.03},    {"MALITE-MN", 0.18, 303.54, 0.81},
    {"3C2D", 67.61, 727.85, 276.46},     {"DTMIC", 17.92, 15353.06, 71.74},
    {"SDN-LSVM", 23.27, 18724.06, 82.96}, {"MalConv2", 1.07, 68719.51, 4.30},
};

}  // namespace malite
