#include "malite/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "malite/error.hpp"
#include "malite/util.hpp"

namespace fs = std::filesystem;

namespace malite {

Manifest::Manifest(std::vector<ManifestEntry> entries) : entries_(std::move(entries)) {
  std::set<std::string> labels;
  std::set<std::string> paths;
  for (const auto& e : entries_) {
    if (e.label.empty()) fail(ErrorKind::FormatError, "empty label for " + e.path);
    if (!paths.insert(e.path).second) fail(ErrorKind::FormatError, "duplicate path " + e.path);
    labels.insert(e.label);
  }
  labels_.assign(labels.begin(), labels.end());
  class_of_.reserve(entries_.size());
  for (const auto& e : entries_) class_of_.push_back(class_id(e.label));
}

int Manifest::class_id(const std::string& label) const {
  auto it = std::lower_bound(labels_.begin(), labels_.end(), label);
  if (it == labels_.end() || *it != label) return -1;
  return static_cast<int>(it - labels_.begin());
}

std::map<std::string, std::size_t> Manifest::class_sizes() const {
  std::map<std::string, std::size_t> sizes;
  for (const auto& e : entries_) ++sizes[e.label];
  return sizes;
}

Manifest scan_dir(const std::string& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) fail(ErrorKind::IoError, root + " is not a directory");
  std::vector<fs::path> class_dirs;
  for (const auto& d : fs::directory_iterator(root)) {
    if (d.is_directory()) class_dirs.push_back(d.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());

  // scan per class in parallel, then concatenate in sorted order
  std::vector<std::vector<ManifestEntry>> per_class(class_dirs.size());
  parallel_for(class_dirs.size(), [&](std::size_t i) {
    const std::string label = class_dirs[i].filename().string();
    for (const auto& f : fs::recursive_directory_iterator(class_dirs[i])) {
      if (!f.is_regular_file()) continue;
      per_class[i].push_back({f.path().generic_string(), label, static_cast<std::uint64_t>(f.file_size())});
    }
    std::sort(per_class[i].begin(), per_class[i].end(),
              [](const auto& a, const auto& b) { return a.path < b.path; });
  });
  std::vector<ManifestEntry> entries;
  for (auto& v : per_class) entries.insert(entries.end(), v.begin(), v.end());
  if (entries.empty()) fail(ErrorKind::EmptyDataset, "no files found under " + root);
  return Manifest(std::move(entries));
}

std::string write_manifest_csv(const Manifest& m) {
  std::string out = "path,label,bytes\n";
  for (const auto& e : m.entries()) {
    out += csv_escape(e.path) + ',' + csv_escape(e.label) + ',' + std::to_string(e.bytes) + '\n';
  }
  return out;
}

Manifest read_manifest_csv(const std::string& text) {
  auto lines = split_lines(text);
  if (lines.empty()) fail(ErrorKind::EmptyDataset, "manifest is empty");
  auto header = parse_csv_line(lines[0]);
  if (header.size() < 2 || header[0] != "path" || header[1] != "label") {
    fail(ErrorKind::FormatError, "manifest must start with a path,label[,bytes] header");
  }
  const bool has_bytes = header.size() >= 3 && header[2] == "bytes";
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto f = parse_csv_line(lines[i]);
    if (f.size() < 2) fail(ErrorKind::FormatError, "manifest row " + std::to_string(i) + " is too short");
    ManifestEntry e{f[0], f[1], 0};
    if (has_bytes && f.size() >= 3 && !f[2].empty()) {
      e.bytes = std::stoull(f[2]);
    } else {
      std::error_code ec;
      auto sz = fs::file_size(e.path, ec);
      if (!ec) e.bytes = sz;
    }
    entries.push_back(std::move(e));
  }
  if (entries.empty()) fail(ErrorKind::EmptyDataset, "manifest has no entries");
  return Manifest(std::move(entries));
}

Manifest load_manifest(const std::string& dir_or_csv) {
  std::error_code ec;
  if (fs::is_directory(dir_or_csv, ec)) return scan_dir(dir_or_csv);
  return read_manifest_csv(read_text_file(dir_or_csv));
}

namespace {

Manifest keep_labels(const Manifest& m, const std::set<std::string>& keep) {
  std::vector<ManifestEntry> out;
  for (const auto& e : m.entries()) {
    if (keep.count(e.label)) out.push_back(e);
  }
  return Manifest(std::move(out));
}

}  // namespace

Manifest filter_min_samples(const Manifest& m, std::size_t min_count) {
  std::set<std::string> keep;
  for (const auto& [label, n] : m.class_sizes()) {
    if (n > min_count) keep.insert(label);
  }
  return keep_labels(m, keep);
}

Manifest top_k_classes(const Manifest& m, std::size_t k) {
  if (k < 1) fail(ErrorKind::InvalidConfig, "k must be >= 1");
  std::vector<std::pair<std::string, std::size_t>> sizes;
  for (const auto& kv : m.class_sizes()) sizes.push_back(kv);
  std::stable_sort(sizes.begin(), sizes.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::set<std::string> keep;
  for (std::size_t i = 0; i < std::min(k, sizes.size()); ++i) keep.insert(sizes[i].first);
  return keep_labels(m, keep);
}

void SplitSpec::validate() const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    fail(ErrorKind::InvalidConfig, "train_fraction must lie in (0, 1)");
  }
}

Split stratified_split(const Manifest& m, const SplitSpec& spec) {
  spec.validate();
  if (m.empty()) fail(ErrorKind::EmptyDataset, "cannot split an empty manifest");
  std::vector<std::vector<std::size_t>> groups;
  if (spec.stratified) {
    groups.resize(m.class_count());
    for (std::size_t i = 0; i < m.size(); ++i) groups[static_cast<std::size_t>(m.class_of(i))].push_back(i);
    for (std::size_t c = 0; c < groups.size(); ++c) {
      if (groups[c].size() < 2) {
        fail(ErrorKind::StratificationError,
             "class '" + m.labels()[c] + "' has a single sample; disable stratification to split it");
      }
    }
  } else {
    groups.resize(1);
    for (std::size_t i = 0; i < m.size(); ++i) groups[0].push_back(i);
  }

  std::vector<char> in_train(m.size(), 0);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    Rng rng(mix_seed(spec.seed, g));
    auto& idx = groups[g];
    shuffle(idx, rng);
    auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(idx.size()) * spec.train_fraction));
    if (idx.size() >= 2) n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    for (std::size_t i = 0; i < n_train; ++i) in_train[idx[i]] = 1;
  }
  std::vector<ManifestEntry> train, eval;
  for (std::size_t i = 0; i < m.size(); ++i) (in_train[i] ? train : eval).push_back(m.entries()[i]);
  return {Manifest(std::move(train)), Manifest(std::move(eval))};
}

}  // namespace malite
