#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace malite {

struct ManifestEntry {
  std::string path;
  std::string label;
  std::uint64_t bytes = 0;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// Labelled sample list. Class ids are dense and follow sorted label order.
class Manifest {
 public:
  Manifest() = default;
  explicit Manifest(std::vector<ManifestEntry> entries);

  const std::vector<ManifestEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t class_count() const { return labels_.size(); }
  int class_id(const std::string& label) const;
  int class_of(std::size_t i) const { return class_of_[i]; }
  std::vector<int> class_ids() const { return class_of_; }
  std::map<std::string, std::size_t> class_sizes() const;

 private:
  std::vector<ManifestEntry> entries_;
  std::vector<std::string> labels_;
  std::vector<int> class_of_;
};

/// One regular file per entry; label = first directory level under root.
Manifest scan_dir(const std::string& root);

/// CSV with header path,label,bytes. A missing bytes column is filled from
/// the file system when the file exists.
std::string write_manifest_csv(const Manifest& m);
Manifest read_manifest_csv(const std::string& text);
Manifest load_manifest(const std::string& dir_or_csv);

/// Keeps classes with strictly more than min_count samples.
Manifest filter_min_samples(const Manifest& m, std::size_t min_count);
/// Keeps the k largest classes; equal sizes rank by label.
Manifest top_k_classes(const Manifest& m, std::size_t k);

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  bool stratified = true;

  void validate() const;
};

struct Split {
  Manifest train;
  Manifest eval;
};

Split stratified_split(const Manifest& m, const SplitSpec& spec);

}  // namespace malite
