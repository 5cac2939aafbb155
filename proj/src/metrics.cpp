#include "malite/metrics.hpp"

#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "malite/error.hpp"

namespace malite {

Metrics compute_metrics(std::span<const int> predictions, std::span<const int> labels, int n_classes) {
  if (predictions.size() != labels.size()) fail(ErrorKind::ShapeError, "predictions and labels differ in length");
  if (labels.empty()) fail(ErrorKind::EmptyInput, "no predictions to score");
  if (n_classes < 1) fail(ErrorKind::InvalidConfig, "n_classes must be >= 1");
  const auto k = static_cast<std::size_t>(n_classes);
  Metrics m;
  m.n_classes = n_classes;
  m.total = labels.size();
  m.confusion.assign(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes || predictions[i] < 0 || predictions[i] >= n_classes) {
      fail(ErrorKind::ShapeError, "class id out of range");
    }
    ++m.confusion[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(predictions[i])];
  }

  m.precision.assign(k, 0.0);
  m.recall.assign(k, 0.0);
  m.f1.assign(k, 0.0);
  m.support.assign(k, 0);
  m.present.assign(k, false);
  std::size_t correct = 0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t tp = m.confusion[c][c];
    std::size_t row = 0, col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += m.confusion[c][j];
      col += m.confusion[j][c];
    }
    correct += tp;
    m.support[c] = row;
    m.present[c] = row > 0 || col > 0;
    m.precision[c] = col ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
    m.recall[c] = row ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
    const double ps = m.precision[c] + m.recall[c];
    m.f1[c] = ps > 0.0 ? 2.0 * m.precision[c] * m.recall[c] / ps : 0.0;
    if (m.present[c]) {
      m.macro_precision += m.precision[c];
      m.macro_recall += m.recall[c];
      m.macro_f1 += m.f1[c];
      ++counted;
    }
  }
  m.macro_precision /= static_cast<double>(counted);
  m.macro_recall /= static_cast<double>(counted);
  m.macro_f1 /= static_cast<double>(counted);
  m.accuracy = static_cast<double>(correct) / static_cast<double>(m.total);
  m.micro_precision = m.accuracy;
  return m;
}

std::string metrics_json(const Metrics& m, const std::vector<std::string>& class_names) {
  nlohmann::ordered_json j;
  j["samples"] = m.total;
  j["accuracy"] = m.accuracy;
  j["macro_precision"] = m.macro_precision;
  j["macro_recall"] = m.macro_recall;
  j["macro_f1"] = m.macro_f1;
  j["micro_precision"] = m.micro_precision;
  j["classes"] = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < m.precision.size(); ++c) {
    j["classes"].push_back({{"label", c < class_names.size() ? class_names[c] : std::to_string(c)},
                            {"support", m.support[c]},
                            {"precision", m.precision[c]},
                            {"recall", m.recall[c]},
                            {"f1", m.f1[c]}});
  }
  j["confusion"] = m.confusion;
  return j.dump(2);
}

std::string metrics_table(const Metrics& m, const std::vector<std::string>& class_names) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << std::left << std::setw(24) << "class" << std::right << std::setw(10) << "support" << std::setw(11)
     << "precision" << std::setw(10) << "recall" << std::setw(10) << "f1" << '\n';
  for (std::size_t c = 0; c < m.precision.size(); ++c) {
    os << std::left << std::setw(24) << (c < class_names.size() ? class_names[c] : std::to_string(c))
       << std::right << std::setw(10) << m.support[c] << std::setw(11) << m.precision[c] << std::setw(10)
       << m.recall[c] << std::setw(10) << m.f1[c] << '\n';
  }
  os << "accuracy " << m.accuracy << "  macro P " << m.macro_precision << "  macro R " << m.macro_recall
     << "  macro F1 " << m.macro_f1 << "  (" << m.total << " samples)\n";
  return os.str();
}

}  // namespace malite
