#pragma once

#include <span>
#include <string>
#include <vector>

namespace malite {

struct Metrics {
  int n_classes = 0;
  std::size_t total = 0;
  double accuracy = 0.0;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  std::vector<std::size_t> support;
  std::vector<bool> present;  // class occurs in truth or predictions
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double micro_precision = 0.0;  // equals accuracy for single-label data
  std::vector<std::vector<std::size_t>> confusion;  // [truth][prediction]
};

/// Macro means run over classes present in the truth or the predictions.
Metrics compute_metrics(std::span<const int> predictions, std::span<const int> labels, int n_classes);

std::string metrics_json(const Metrics& m, const std::vector<std::string>& class_names);
std::string metrics_table(const Metrics& m, const std::vector<std::string>& class_names);

}  // namespace malite
