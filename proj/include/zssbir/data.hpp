#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "zssbir/matrix.hpp"
#include "zssbir/training.hpp"

namespace zssbir {

enum class FeatureRole { sketch, image, database };

// Feature rows with one class name per row.
struct FeatureStore {
  Matrix features;
  std::vector<std::string> labels;
  FeatureRole role = FeatureRole::database;

  std::size_t size() const { return features.rows(); }
  void validate() const;
};

// Row i of `sketch` and row i of `image` describe the same instance.
struct PairedDataset {
  Matrix sketch;
  Matrix image;
  std::vector<std::string> labels;

  std::size_t size() const { return labels.size(); }
  void validate() const;
  PairedDataset subset(std::span<const std::size_t> rows) const;
};

// Counts reported for a split, one field per benchmark statistic.
struct SplitStats {
  std::size_t train_classes = 0;
  std::size_t test_classes = 0;
  std::size_t train_sketches = 0;
  std::size_t test_sketches = 0;
  std::size_t db_train = 0;
  std::size_t db_test = 0;
};

// Seen/unseen partition of the classes together with the paired data and
// database restricted to each side. Only `s_tr` may reach a trainer.
struct ZeroShotSplit {
  std::set<std::string> train_classes;
  std::set<std::string> test_classes;
  PairedDataset s_tr;
  PairedDataset s_te;
  FeatureStore d_tr;
  FeatureStore d_te;

  SplitStats stats() const;
  // Re-checks disjointness of every derived set; throws SplitViolation.
  void check_invariants() const;
};

ZeroShotSplit make_zero_shot_split(const PairedDataset& paired, const FeatureStore& database,
                                   const std::set<std::string>& test_classes);

// Audit callback for TrainConfig that throws SplitViolation on any batch row
// whose label is a test class.
BatchAudit split_guard(std::set<std::string> test_classes);

// Train/test class lists, stored as JSON {"train_classes": [...], "test_classes": [...]}.
struct SplitManifest {
  std::vector<std::string> train_classes;
  std::vector<std::string> test_classes;

  // Throws ConfigError naming duplicates, overlaps or empty sides.
  void validate() const;
  SplitStats class_counts() const;
};

SplitManifest read_manifest(const std::string& path);
void write_manifest(const std::string& path, const SplitManifest& manifest);

// Feature file: "ZSFV", u32 version (=1), u64 rows, u64 cols, then rows×cols
// float32 values, all little-endian, row-major.
inline constexpr std::uint32_t kFeatureFormatVersion = 1;
std::vector<std::uint8_t> encode_feature_file(const Matrix& m);
Matrix decode_feature_file(std::span<const std::uint8_t> bytes);
void save_feature_matrix(const std::string& path, const Matrix& m);
Matrix load_feature_matrix(const std::string& path);

// UTF-8, one class name per line.
void save_labels(const std::string& path, std::span<const std::string> labels);
std::vector<std::string> load_labels(const std::string& path);

FeatureStore load_features(const std::string& feature_path, const std::string& label_path,
                           FeatureRole role = FeatureRole::database);
void save_features(const FeatureStore& store, const std::string& feature_path, const std::string& label_path);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);

struct SyntheticConfig {
  std::size_t n_classes_train = 12;
  std::size_t n_classes_test = 4;
  std::size_t d_img = 32;
  std::size_t d_sketch = 16;
  std::size_t pairs_per_class = 50;
  std::size_t db_per_class = 60;
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticData {
  PairedDataset paired;
  FeatureStore database;
  std::set<std::string> test_classes;
  std::vector<std::string> class_names;  // train classes first
  Matrix prototypes;                     // one row per class
  Matrix projection;                     // d_img × d_sketch
};

// Class prototypes p_c ~ N(0, I); images p_c + ε; sketches (p_c + ε')·P + ε''
// with a single projection P shared by all classes.
SyntheticData synth_generate(const SyntheticConfig& cfg);

}  // namespace zssbir
