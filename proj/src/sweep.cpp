#include "malite/sweep.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "malite/featurizer.hpp"
#include "malite/pipeline.hpp"

namespace malite {

std::string SweepPoint::label() const {
  return std::to_string(bins) + "-" + std::to_string(ph) + "-" + std::to_string(pw);
}

std::vector<SweepPoint> SweepGrid::points() const {
  std::vector<SweepPoint> out;
  for (int b : bins) {
    for (int ph : heights) {
      std::vector<int> widths{ph};
      if (side != ph) widths.push_back(side);
      for (int pw : widths) {
        if (ph > pw) continue;
        for (int e : estimators) out.push_back({b, ph, pw, e});
      }
    }
  }
  return out;
}

std::string SweepResult::to_csv() const {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  os << "config,bins,ph,pw,estimators,accuracy,macro_precision,micro_precision,macro_recall,macro_f1\n";
  for (const auto& r : rows) {
    os << r.point.label() << ',' << r.point.bins << ',' << r.point.ph << ',' << r.point.pw << ','
       << r.point.estimators << ',' << r.metrics.accuracy << ',' << r.metrics.macro_precision << ','
       << r.metrics.micro_precision << ',' << r.metrics.macro_recall << ',' << r.metrics.macro_f1 << '\n';
  }
  return os.str();
}

SweepResult sweep_hrf(const Manifest& train, const Manifest& eval, const SweepGrid& grid,
                      const SweepOptions& opts) {
  const auto train_images = load_images(train, opts.rgb, grid.side);
  const auto eval_images = load_images(eval, opts.rgb, grid.side);
  const auto points = grid.points();

  SweepResult result;
  // features depend only on (bins, ph, pw); reuse them across forest sizes
  std::map<std::string, std::pair<FeatureTable, FeatureTable>> cache;
  for (std::size_t gi = 0; gi < points.size(); ++gi) {
    const SweepPoint& p = points[gi];
    FeaturizerSettings s;
    s.hist.bins = p.bins;
    s.patch = PatchSpec{p.ph, p.pw, opts.overlap};
    s.side = grid.side;
    s.rgb = opts.rgb;
    try {
      s.hist.validate();
      s.patch.validate(grid.side, grid.side);
    } catch (const Error& e) {
      result.skipped.emplace_back(p, e.what());
      continue;
    }
    auto it = cache.find(p.label());
    if (it == cache.end()) {
      it = cache.emplace(p.label(), std::make_pair(featurize_images(train_images, train, s),
                                                   featurize_images(eval_images, eval, s)))
               .first;
    }
    ForestConfig fc;
    fc.n_estimators = p.estimators;
    fc.max_depth = opts.max_depth;
    fc.seed = mix_seed(opts.seed, gi);
    HrfModel model = train_hrf(it->second.first, s, fc);
    SweepRow row;
    row.point = p;
    row.grid_index = gi;
    row.metrics = evaluate_hrf(model, it->second.second, "sweep").metrics;
    result.rows.push_back(std::move(row));
  }
  std::stable_sort(result.rows.begin(), result.rows.end(), [](const SweepRow& a, const SweepRow& b) {
    if (a.metrics.macro_f1 != b.metrics.macro_f1) return a.metrics.macro_f1 > b.metrics.macro_f1;
    return a.grid_index < b.grid_index;
  });
  return result;
}

}  // namespace malite
