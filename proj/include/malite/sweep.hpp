#pragma once

#include <string>
#include <vector>

#include "malite/byteplot.hpp"
#include "malite/data.hpp"
#include "malite/forest.hpp"
#include "malite/metrics.hpp"

namespace malite {

struct SweepPoint {
  int bins = 64;
  int ph = 32;
  int pw = 256;
  int estimators = 51;

  /// "bin-ph-pw", e.g. "64-32-256".
  std::string label() const;
};

/// Patch heights x {square, full-width} widths x bin counts x forest sizes,
/// subject to ph <= pw and pw in {ph, side}.
struct SweepGrid {
  std::vector<int> bins{16, 32, 64, 128, 256};
  std::vector<int> heights{8, 16, 32, 64, 128, 256};
  std::vector<int> estimators{11, 31, 51, 101};
  int side = kDefaultSide;

  std::vector<SweepPoint> points() const;
};

struct SweepRow {
  SweepPoint point;
  std::size_t grid_index = 0;
  Metrics metrics;
};

struct SweepResult {
  std::vector<SweepRow> rows;  // sorted by macro F1, best first
  std::vector<std::pair<SweepPoint, std::string>> skipped;

  std::string to_csv() const;
};

struct SweepOptions {
  double overlap = 0.5;
  bool rgb = false;
  int max_depth = 15;
  std::uint64_t seed = 0;  // grid point i trains with mix_seed(seed, i)
};

/// Trains and scores one forest per feasible grid point on a fixed split.
SweepResult sweep_hrf(const Manifest& train, const Manifest& eval, const SweepGrid& grid,
                      const SweepOptions& opts);

}  // namespace malite
