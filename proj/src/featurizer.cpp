#include "malite/featurizer.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "malite/error.hpp"
#include "malite/util.hpp"

namespace malite {

int PatchSpec::stride() const {
  return static_cast<int>(std::lround(ph * (1.0 - overlap)));
}

void PatchSpec::validate(int image_height, int image_width) const {
  auto bad = [](const std::string& why) { fail(ErrorKind::InvalidPatchSpec, why); };
  if (ph <= 0 || pw <= 0) bad("patch dimensions must be positive");
  if (ph % 8 != 0 || pw % 8 != 0) bad("patch dimensions must be multiples of 8");
  if (!(overlap >= 0.0 && overlap < 1.0)) bad("overlap must lie in [0, 1)");
  const double exact = ph * (1.0 - overlap);
  if (stride() <= 0 || std::abs(exact - stride()) > 1e-9) bad("vertical stride must be a positive integer");
  if (ph > image_height || pw > image_width) {
    bad("patch " + std::to_string(ph) + "x" + std::to_string(pw) + " exceeds image " +
        std::to_string(image_height) + "x" + std::to_string(image_width));
  }
}

void HistogramConfig::validate() const {
  if (bins <= 0 || bins > 256 || 256 % bins != 0) {
    fail(ErrorKind::InvalidConfig, "bin count must divide 256");
  }
}

int vertical_windows(int height, const PatchSpec& spec) {
  const int s = spec.stride();
  return (height + s - 1) / s;
}

int horizontal_windows(int width, const PatchSpec& spec) { return (width + spec.pw - 1) / spec.pw; }

std::vector<Patch> extract_patches(const ByteImage& img, const PatchSpec& spec) {
  if (!img.valid()) fail(ErrorKind::ShapeError, "invalid image");
  spec.validate(img.height, img.width);
  const int rows = vertical_windows(img.height, spec);
  const int cols = horizontal_windows(img.width, spec);
  std::vector<Patch> patches;
  patches.reserve(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      patches.push_back(Patch{&img, r * spec.stride(), c * spec.pw, spec.ph, spec.pw});
    }
  }
  return patches;
}

std::vector<std::uint32_t> histogram(const Patch& patch, const HistogramConfig& cfg) {
  cfg.validate();
  const ByteImage& img = *patch.image;
  std::vector<std::uint32_t> counts(static_cast<std::size_t>(cfg.bins), 0);
  // per-value table first, then fold into bins
  std::uint32_t by_value[256] = {};
  const int y_end = std::min(patch.row + patch.ph, img.height);
  const int x_end = std::min(patch.col + patch.pw, img.width);
  const std::size_t span = static_cast<std::size_t>(std::max(0, x_end - patch.col)) * img.channels;
  std::size_t seen = 0;
  for (int y = patch.row; y < y_end; ++y) {
    const std::uint8_t* p = img.pixels.data() + y * img.row_bytes() +
                            static_cast<std::size_t>(patch.col) * img.channels;
    for (std::size_t i = 0; i < span; ++i) ++by_value[p[i]];
    seen += span;
  }
  by_value[0] += static_cast<std::uint32_t>(patch.sample_count() - seen);
  for (int v = 0; v < 256; ++v) counts[cfg.bin_of(static_cast<std::uint8_t>(v))] += by_value[v];
  return counts;
}

FeatureVector featurize(const ByteImage& img, const PatchSpec& spec, const HistogramConfig& cfg) {
  cfg.validate();
  auto patches = extract_patches(img, spec);
  FeatureVector out;
  out.reserve(patches.size() * static_cast<std::size_t>(cfg.bins));
  for (const auto& p : patches) {
    auto h = histogram(p, cfg);
    out.insert(out.end(), h.begin(), h.end());
  }
  return out;
}

void FeatureTable::append(std::string path, std::string label, std::span<const std::uint32_t> v) {
  if (paths.empty() && cols == 0) cols = v.size();
  if (v.size() != cols) fail(ErrorKind::ShapeError, "feature row length mismatch");
  paths.push_back(std::move(path));
  labels.push_back(std::move(label));
  values.insert(values.end(), v.begin(), v.end());
}

namespace {

constexpr std::string_view kCsvTag = "# malite-features";

std::string settings_line(const FeaturizerSettings& s) {
  std::ostringstream os;
  os << kCsvTag << " bins=" << s.hist.bins << " ph=" << s.patch.ph << " pw=" << s.patch.pw
     << " overlap=" << s.patch.overlap << " side=" << s.side << " mode=" << (s.rgb ? "rgb" : "gray");
  return os.str();
}

FeaturizerSettings parse_settings(std::string_view line) {
  FeaturizerSettings s;
  std::istringstream is{std::string(line.substr(kCsvTag.size()))};
  std::string tok;
  while (is >> tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos) continue;
    std::string key = tok.substr(0, eq);
    std::string val = tok.substr(eq + 1);
    if (key == "bins") s.hist.bins = std::stoi(val);
    else if (key == "ph") s.patch.ph = std::stoi(val);
    else if (key == "pw") s.patch.pw = std::stoi(val);
    else if (key == "overlap") s.patch.overlap = std::stod(val);
    else if (key == "side") s.side = std::stoi(val);
    else if (key == "mode") s.rgb = (val == "rgb");
  }
  return s;
}

std::uint32_t parse_u32(const std::string& field) {
  std::uint32_t v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    fail(ErrorKind::FormatError, "bad feature value '" + field + "'");
  }
  return v;
}

}  // namespace

std::string write_features_csv(const FeatureTable& table, const FeaturizerSettings& settings) {
  std::string out = settings_line(settings);
  out += "\npath,label";
  for (std::size_t j = 0; j < table.cols; ++j) out += ",f" + std::to_string(j);
  out += '\n';
  for (std::size_t i = 0; i < table.rows(); ++i) {
    out += csv_escape(table.paths[i]);
    out += ',';
    out += csv_escape(table.labels[i]);
    for (auto v : table.row(i)) {
      out += ',';
      out += std::to_string(v);
    }
    out += '\n';
  }
  return out;
}

FeatureTable read_features_csv(const std::string& text, FeaturizerSettings* settings) {
  FeatureTable table;
  bool header_seen = false;
  std::vector<std::uint32_t> row;
  for (auto line : split_lines(text)) {
    if (line.starts_with(kCsvTag)) {
      if (settings) *settings = parse_settings(line);
      continue;
    }
    if (line.starts_with("#")) continue;
    auto fields = parse_csv_line(line);
    if (!header_seen) {
      if (fields.size() < 2 || fields[0] != "path" || fields[1] != "label") {
        fail(ErrorKind::FormatError, "feature CSV must start with a path,label header");
      }
      header_seen = true;
      table.cols = fields.size() - 2;
      continue;
    }
    if (fields.size() != table.cols + 2) fail(ErrorKind::FormatError, "ragged feature CSV row");
    row.clear();
    for (std::size_t j = 2; j < fields.size(); ++j) row.push_back(parse_u32(fields[j]));
    table.append(std::move(fields[0]), std::move(fields[1]), row);
  }
  if (!header_seen) fail(ErrorKind::FormatError, "feature CSV has no header");
  return table;
}

std::vector<std::uint8_t> encode_features_binary(const FeatureTable& table) {
  ByteWriter w;
  w.str("MLFV");
  w.u32(static_cast<std::uint32_t>(table.rows()));
  w.u32(static_cast<std::uint32_t>(table.cols));
  for (auto v : table.values) w.u32(v);
  return w.take();
}

FeatureTable decode_features_binary(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.str(4) != "MLFV") fail(ErrorKind::FormatError, "bad feature matrix magic");
  const std::uint32_t rows = r.u32();
  const std::uint32_t cols = r.u32();
  if (r.remaining() != static_cast<std::size_t>(rows) * cols * 4) {
    fail(ErrorKind::FormatError, "feature matrix size does not match header");
  }
  FeatureTable t;
  t.cols = cols;
  t.values.reserve(static_cast<std::size_t>(rows) * cols);
  for (std::size_t i = 0; i < static_cast<std::size_t>(rows) * cols; ++i) t.values.push_back(r.u32());
  t.paths.assign(rows, "");
  t.labels.assign(rows, "");
  return t;
}

}  // namespace malite
