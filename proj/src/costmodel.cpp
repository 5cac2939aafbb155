#include "malite/costmodel.hpp"

#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace malite {

CostReport CostReport::from_layers(std::vector<LayerCost> layers, std::uint64_t size_bytes) {
  CostReport r;
  for (const auto& l : layers) {
    r.params += l.params;
    r.mult_adds += l.mult_adds;
  }
  r.size_bytes = size_bytes;
  r.breakdown = std::move(layers);
  return r;
}

std::string CostReport::to_json() const {
  nlohmann::ordered_json j;
  j["params"] = params;
  j["mult_adds"] = mult_adds;
  j["size_bytes"] = size_bytes;
  j["params_millions"] = static_cast<double>(params) / 1e6;
  j["mult_adds_millions"] = static_cast<double>(mult_adds) / 1e6;
  j["size_mb"] = static_cast<double>(size_bytes) / 1e6;
  j["layers"] = nlohmann::ordered_json::array();
  for (const auto& l : breakdown) {
    j["layers"].push_back({{"name", l.name}, {"params", l.params}, {"mult_adds", l.mult_adds}});
  }
  for (const auto& [k, v] : notes) j["notes"][k] = v;
  return j.dump(2);
}

std::string CostReport::to_table() const {
  std::ostringstream os;
  os << std::left << std::setw(28) << "layer" << std::right << std::setw(14) << "params" << std::setw(16)
     << "mult_adds" << '\n';
  for (const auto& l : breakdown) {
    os << std::left << std::setw(28) << l.name << std::right << std::setw(14) << l.params << std::setw(16)
       << l.mult_adds << '\n';
  }
  os << std::left << std::setw(28) << "total" << std::right << std::setw(14) << params << std::setw(16)
     << mult_adds << '\n';
  os << std::fixed << std::setprecision(2) << "params " << params / 1e6 << "M  mult-adds " << mult_adds / 1e6
     << "M  size " << size_bytes / 1e6 << "MB (" << size_bytes << " bytes)\n";
  for (const auto& [k, v] : notes) os << k << ": " << v << '\n';
  return os.str();
}

Cost conv_cost(std::uint64_t h_out, std::uint64_t w_out, std::uint64_t cin, std::uint64_t cout, std::uint64_t k,
               bool bias) {
  return {k * k * cin * cout + (bias ? cout : 0), h_out * w_out * k * k * cin * cout};
}

Cost depthwise_cost(std::uint64_t h_out, std::uint64_t w_out, std::uint64_t channels, std::uint64_t k) {
  return {k * k * channels, h_out * w_out * k * k * channels};
}

Cost batch_norm_cost(std::uint64_t channels) { return {2 * channels, 0}; }

Cost dense_cost(std::uint64_t in, std::uint64_t out) { return {in * out + out, in * out}; }

namespace {

std::uint64_t down(std::uint64_t extent, int stride) {
  return (extent + static_cast<std::uint64_t>(stride) - 1) / static_cast<std::uint64_t>(stride);
}

LayerCost layer(std::string name, Cost c) { return {std::move(name), c.params, c.mult_adds}; }

}  // namespace

std::vector<LayerCost> bottleneck_layers(const std::string& name, std::uint64_t h, std::uint64_t w,
                                         const BottleneckSpec& spec) {
  spec.validate();
  const auto hidden = static_cast<std::uint64_t>(spec.hidden());
  const auto k = static_cast<std::uint64_t>(spec.k);
  const std::uint64_t ho = down(h, spec.stride);
  const std::uint64_t wo = down(w, spec.stride);
  return {
      layer(name + ".expand", conv_cost(h, w, static_cast<std::uint64_t>(spec.x), hidden, 1)),
      layer(name + ".expand_bn", batch_norm_cost(hidden)),
      layer(name + ".depthwise", depthwise_cost(ho, wo, hidden, k)),
      layer(name + ".depthwise_bn", batch_norm_cost(hidden)),
      layer(name + ".project", conv_cost(ho, wo, hidden, static_cast<std::uint64_t>(spec.x_out), 1)),
      layer(name + ".project_bn", batch_norm_cost(static_cast<std::uint64_t>(spec.x_out))),
  };
}

Cost bottleneck_cost(std::uint64_t h, std::uint64_t w, const BottleneckSpec& spec) {
  Cost total;
  for (const auto& l : bottleneck_layers("b", h, w, spec)) total += Cost{l.params, l.mult_adds};
  return total;
}

std::uint64_t hist_cost(std::uint64_t n_patches, std::uint64_t ph, std::uint64_t pw) {
  return n_patches * ph * pw;
}

std::uint64_t forest_cost(std::uint64_t estimators, std::uint64_t height) { return estimators * height; }

double separable_reduction(std::uint64_t channels, std::uint64_t k) {
  const Cost dense = conv_cost(1, 1, channels, channels, k);
  Cost separable = depthwise_cost(1, 1, channels, k);
  separable += conv_cost(1, 1, channels, channels, 1);
  return static_cast<double>(dense.mult_adds) / static_cast<double>(separable.mult_adds);
}

std::vector<LayerCost> network_layers(const NetConfig& cfg, int side) {
  cfg.validate();
  if (side <= 0) fail(ErrorKind::ShapeError, "input side must be positive");
  const auto k = static_cast<std::uint64_t>(NetConfig::kKernel);
  std::vector<LayerCost> layers;
  std::uint64_t h = down(static_cast<std::uint64_t>(side), cfg.stem_stride);
  std::uint64_t w = h;
  layers.push_back(layer("stem", conv_cost(h, w, static_cast<std::uint64_t>(cfg.input_channels),
                                           static_cast<std::uint64_t>(cfg.stem_channels), k)));
  layers.push_back(layer("stem_bn", batch_norm_cost(static_cast<std::uint64_t>(cfg.stem_channels))));
  auto specs = cfg.bottlenecks();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    auto block = bottleneck_layers("block" + std::to_string(i), h, w, specs[i]);
    layers.insert(layers.end(), block.begin(), block.end());
    h = down(h, specs[i].stride);
    w = down(w, specs[i].stride);
  }
  const auto last = static_cast<std::uint64_t>(specs.back().x_out);
  const auto head = static_cast<std::uint64_t>(cfg.head_channels);
  layers.push_back(layer("head", conv_cost(h, w, last, head, k)));
  layers.push_back(layer("head_bn", batch_norm_cost(head)));
  layers.push_back(layer("fc", dense_cost(head, static_cast<std::uint64_t>(cfg.classes))));
  return layers;
}

CostReport report(const HrfModel& m) {
  const auto& s = m.features;
  const auto n = static_cast<std::uint64_t>(vertical_windows(s.side, s.patch)) *
                 static_cast<std::uint64_t>(horizontal_windows(s.side, s.patch));
  const TreeStats stats = tree_stats(m.forest);
  std::vector<LayerCost> layers{
      {"histogram", 0, hist_cost(n, static_cast<std::uint64_t>(s.patch.ph), static_cast<std::uint64_t>(s.patch.pw))},
      {"forest", stats.total_nodes,
       forest_cost(m.forest.trees.size(), static_cast<std::uint64_t>(stats.max_depth_observed))},
  };
  CostReport r = CostReport::from_layers(std::move(layers), save_model(m).size());
  r.notes.emplace_back("params", "forest parameters are counted as tree nodes");
  r.notes.emplace_back("forest_mult_adds", "upper bound: estimators x observed max depth");
  r.notes.emplace_back("patches", std::to_string(n));
  r.notes.emplace_back("total_leaves", std::to_string(stats.total_leaves));
  return r;
}

CostReport report(const FeaturizerSettings& features, const ForestConfig& forest) {
  const auto n = static_cast<std::uint64_t>(vertical_windows(features.side, features.patch)) *
                 static_cast<std::uint64_t>(horizontal_windows(features.side, features.patch));
  const auto depth = static_cast<std::uint64_t>(forest.max_depth);
  const auto trees = static_cast<std::uint64_t>(forest.n_estimators);
  std::vector<LayerCost> layers{
      {"histogram", 0,
       hist_cost(n, static_cast<std::uint64_t>(features.patch.ph), static_cast<std::uint64_t>(features.patch.pw))},
      {"forest", trees * ((std::uint64_t{2} << depth) - 1), forest_cost(trees, depth)},
  };
  CostReport r = CostReport::from_layers(std::move(layers), 0);
  r.notes.emplace_back("params", "upper bound: complete trees of max depth");
  r.notes.emplace_back("forest_mult_adds", "upper bound: estimators x max depth");
  r.notes.emplace_back("patches", std::to_string(n));
  r.notes.emplace_back("size", "needs a trained model");
  return r;
}

CostReport report(const MnModel& m) {
  CostReport r = CostReport::from_layers(network_layers(m.config(), m.side), save_model(m).size());
  r.notes.emplace_back("input", std::to_string(m.side) + "x" + std::to_string(m.side) + "x" +
                                    std::to_string(m.config().input_channels));
  return r;
}

CostReport report(const NetConfig& cfg, int side) {
  std::vector<std::string> labels;
  for (int i = 0; i < cfg.classes; ++i) labels.push_back("class" + std::to_string(i));
  MnModel m(cfg, side, std::move(labels));
  return report(m);
}

}  // namespace malite
