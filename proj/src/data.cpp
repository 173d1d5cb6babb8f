#include "zssbir/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <sstream>

#include "zssbir/errors.hpp"
#include "zssbir/linalg.hpp"

#include <json.hpp>

namespace zssbir {

namespace {

constexpr char kFeatureMagic[4] = {'Z', 'S', 'F', 'V'};
constexpr std::size_t kFeatureHeaderSize = 4 + 4 + 8 + 8;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[at + i]) << (8 * i);
  return v;
}

bool valid_utf8(const std::string& s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t extra = 0;
    if (c < 0x80) {
      extra = 0;
    } else if ((c & 0xE0) == 0xC0 && c >= 0xC2) {
      extra = 1;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2;
    } else if ((c & 0xF8) == 0xF0 && c <= 0xF4) {
      extra = 3;
    } else {
      return false;
    }
    if (i + extra >= s.size() && extra > 0) return false;
    for (std::size_t k = 1; k <= extra; ++k) {
      if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) return false;
    }
    i += extra + 1;
  }
  return true;
}

std::set<std::string> label_set(std::span<const std::string> labels) {
  return {labels.begin(), labels.end()};
}

FeatureStore filter_store(const FeatureStore& store, const std::set<std::string>& keep) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < store.labels.size(); ++i) {
    if (keep.contains(store.labels[i])) rows.push_back(i);
  }
  FeatureStore out;
  out.role = store.role;
  out.features = gather_rows(store.features, rows);
  for (std::size_t r : rows) out.labels.push_back(store.labels[r]);
  return out;
}

PairedDataset filter_pairs(const PairedDataset& paired, const std::set<std::string>& keep) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < paired.labels.size(); ++i) {
    if (keep.contains(paired.labels[i])) rows.push_back(i);
  }
  return paired.subset(rows);
}

std::string join(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) {
    if (!out.empty()) out += ", ";
    out += n;
  }
  return out;
}

}  // namespace

void FeatureStore::validate() const {
  if (labels.size() != features.rows()) {
    throw ConsistencyError("feature store has " + std::to_string(features.rows()) + " rows but " +
                           std::to_string(labels.size()) + " labels");
  }
  for (const auto& l : labels) {
    if (l.empty()) throw FormatError("empty class name");
  }
}

void PairedDataset::validate() const {
  if (sketch.rows() != image.rows() || sketch.rows() != labels.size()) {
    throw ConsistencyError("paired dataset: " + std::to_string(sketch.rows()) + " sketches, " +
                           std::to_string(image.rows()) + " images, " + std::to_string(labels.size()) +
                           " labels");
  }
}

PairedDataset PairedDataset::subset(std::span<const std::size_t> rows) const {
  PairedDataset out;
  out.sketch = gather_rows(sketch, rows);
  out.image = gather_rows(image, rows);
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) out.labels.push_back(labels.at(r));
  return out;
}

SplitStats ZeroShotSplit::stats() const {
  return {train_classes.size(), test_classes.size(), s_tr.size(), s_te.size(), d_tr.size(), d_te.size()};
}

void ZeroShotSplit::check_invariants() const {
  for (const auto& c : train_classes) {
    if (test_classes.contains(c)) throw SplitViolation("class '" + c + "' is both a train and a test class");
  }
  for (const auto& l : s_tr.labels) {
    if (!train_classes.contains(l)) throw SplitViolation("training pair labelled '" + l + "' is not a train class");
  }
  for (const auto& l : s_te.labels) {
    if (!test_classes.contains(l)) throw SplitViolation("test pair labelled '" + l + "' is not a test class");
  }
  for (const auto& l : d_tr.labels) {
    if (!train_classes.contains(l)) throw SplitViolation("train database row labelled '" + l + "'");
  }
  for (const auto& l : d_te.labels) {
    if (!test_classes.contains(l)) throw SplitViolation("test database row labelled '" + l + "'");
  }
}

ZeroShotSplit make_zero_shot_split(const PairedDataset& paired, const FeatureStore& database,
                                   const std::set<std::string>& test_classes) {
  paired.validate();
  database.validate();
  std::set<std::string> observed = label_set(paired.labels);
  const std::set<std::string> db_classes = label_set(database.labels);
  observed.insert(db_classes.begin(), db_classes.end());

  for (const auto& c : test_classes) {
    if (!observed.contains(c)) throw ConfigError("test class '" + c + "' does not occur in the data");
  }
  ZeroShotSplit split;
  split.test_classes = test_classes;
  for (const auto& c : observed) {
    if (!test_classes.contains(c)) split.train_classes.insert(c);
  }
  if (split.test_classes.empty()) throw ConfigError("zero-shot split needs at least one test class");
  if (split.train_classes.empty()) throw ConfigError("zero-shot split needs at least one train class");

  split.s_tr = filter_pairs(paired, split.train_classes);
  split.s_te = filter_pairs(paired, split.test_classes);
  split.d_tr = filter_store(database, split.train_classes);
  split.d_te = filter_store(database, split.test_classes);
  split.check_invariants();
  return split;
}

BatchAudit split_guard(std::set<std::string> test_classes) {
  return [test = std::move(test_classes)](const PairedDataset& data, std::span<const std::size_t> rows) {
    for (std::size_t r : rows) {
      if (test.contains(data.labels.at(r))) {
        throw SplitViolation("training batch contains row " + std::to_string(r) + " of test class '" +
                             data.labels[r] + "'");
      }
    }
  };
}

void SplitManifest::validate() const {
  if (train_classes.empty()) throw ConfigError("manifest lists no train classes");
  if (test_classes.empty()) throw ConfigError("manifest lists no test classes");
  std::map<std::string, int> seen;
  for (const auto& c : train_classes) seen[c] |= 1;
  for (const auto& c : test_classes) seen[c] |= 2;
  if (seen.size() != train_classes.size() + test_classes.size()) {
    std::vector<std::string> overlap;
    for (const auto& [name, mask] : seen) {
      if (mask == 3) overlap.push_back(name);
    }
    if (!overlap.empty()) throw SplitViolation("manifest classes appear in both train and test: " + join(overlap));
    throw ConfigError("manifest lists a class more than once");
  }
  for (const auto& [name, mask] : seen) {
    if (name.empty()) throw ConfigError("manifest contains an empty class name");
  }
}

SplitStats SplitManifest::class_counts() const {
  SplitStats s;
  s.train_classes = train_classes.size();
  s.test_classes = test_classes.size();
  return s;
}

SplitManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
    SplitManifest m;
    m.train_classes = doc.at("train_classes").get<std::vector<std::string>>();
    m.test_classes = doc.at("test_classes").get<std::vector<std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest '" + path + "': " + e.what());
  }
}

void write_manifest(const std::string& path, const SplitManifest& manifest) {
  nlohmann::ordered_json doc;
  doc["train_classes"] = manifest.train_classes;
  doc["test_classes"] = manifest.test_classes;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << doc.dump(2) << '\n';
}

std::vector<std::uint8_t> encode_feature_file(const Matrix& m) {
  std::vector<std::uint8_t> out;
  out.reserve(kFeatureHeaderSize + 4 * m.size());
  out.insert(out.end(), std::begin(kFeatureMagic), std::end(kFeatureMagic));
  put_u32(out, kFeatureFormatVersion);
  put_u64(out, m.rows());
  put_u64(out, m.cols());
  for (double v : m.values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

Matrix decode_feature_file(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFeatureHeaderSize) throw FormatError("feature file is truncated (header)");
  if (!std::equal(std::begin(kFeatureMagic), std::end(kFeatureMagic), bytes.begin(),
                  [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; })) {
    throw FormatError("feature file has bad magic");
  }
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kFeatureFormatVersion) {
    throw FormatError("unsupported feature file version " + std::to_string(version));
  }
  const std::uint64_t rows = get_u64(bytes, 8);
  const std::uint64_t cols = get_u64(bytes, 16);
  if (cols != 0 && rows > (std::numeric_limits<std::uint64_t>::max() - kFeatureHeaderSize) / 4 / cols) {
    throw FormatError("feature file header declares an impossible size");
  }
  const std::uint64_t expected = kFeatureHeaderSize + 4 * rows * cols;
  if (bytes.size() < expected) throw FormatError("feature file is truncated (payload)");
  if (bytes.size() > expected) throw FormatError("feature file has trailing bytes");

  Matrix m(rows, cols);
  auto values = m.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float f = std::bit_cast<float>(get_u32(bytes, kFeatureHeaderSize + 4 * i));
    if (!std::isfinite(f)) {
      throw DataError("non-finite feature value at row " + std::to_string(i / cols) + ", column " +
                      std::to_string(i % cols));
    }
    values[i] = static_cast<double>(f);
  }
  return m;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

void save_feature_matrix(const std::string& path, const Matrix& m) {
  if (!m.all_finite()) throw DataError("refusing to save non-finite features to '" + path + "'");
  write_file_bytes(path, encode_feature_file(m));
}

Matrix load_feature_matrix(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_feature_file(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void save_labels(const std::string& path, std::span<const std::string> labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (const auto& l : labels) {
    if (l.empty() || l.find('\n') != std::string::npos) throw FormatError("invalid class name '" + l + "'");
    out << l << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

std::vector<std::string> load_labels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<std::string> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw FormatError(path + ": empty class name on line " + std::to_string(line_no));
    if (!valid_utf8(line)) throw FormatError(path + ": invalid UTF-8 on line " + std::to_string(line_no));
    labels.push_back(line);
  }
  return labels;
}

FeatureStore load_features(const std::string& feature_path, const std::string& label_path, FeatureRole role) {
  FeatureStore store;
  store.features = load_feature_matrix(feature_path);
  store.labels = load_labels(label_path);
  store.role = role;
  store.validate();
  return store;
}

void save_features(const FeatureStore& store, const std::string& feature_path, const std::string& label_path) {
  store.validate();
  save_feature_matrix(feature_path, store.features);
  save_labels(label_path, store.labels);
}

void SyntheticConfig::validate() const {
  if (n_classes_train == 0 || n_classes_test == 0 || d_img == 0 || d_sketch == 0 || pairs_per_class == 0 ||
      db_per_class == 0) {
    throw ConfigError("synthetic config: all counts must be at least 1");
  }
  if (!(noise_sigma >= 0.0)) throw ConfigError("synthetic config: noise_sigma must be non-negative");
}

SyntheticData synth_generate(const SyntheticConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t n_classes = cfg.n_classes_train + cfg.n_classes_test;
  const double sigma = cfg.noise_sigma;

  SyntheticData out;
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::ostringstream name;
    name << (c < cfg.n_classes_train ? "train_" : "test_");
    name.width(3);
    name.fill('0');
    name << c;
    out.class_names.push_back(name.str());
  }
  for (std::size_t c = cfg.n_classes_train; c < n_classes; ++c) out.test_classes.insert(out.class_names[c]);

  out.prototypes = gaussian_sample(rng, n_classes, cfg.d_img);
  out.projection = gaussian_sample(rng, cfg.d_img, cfg.d_sketch);
  out.projection *= 1.0 / std::sqrt(static_cast<double>(cfg.d_img));

  const std::size_t n_pairs = n_classes * cfg.pairs_per_class;
  out.paired.image = Matrix(n_pairs, cfg.d_img);
  Matrix latent_sketch(n_pairs, cfg.d_img);
  for (std::size_t c = 0; c < n_classes; ++c) {
    const auto proto = out.prototypes.row(c);
    for (std::size_t k = 0; k < cfg.pairs_per_class; ++k) {
      const std::size_t r = c * cfg.pairs_per_class + k;
      auto img = out.paired.image.row(r);
      auto pre = latent_sketch.row(r);
      for (std::size_t j = 0; j < cfg.d_img; ++j) img[j] = proto[j] + sigma * rng.normal();
      for (std::size_t j = 0; j < cfg.d_img; ++j) pre[j] = proto[j] + sigma * rng.normal();
      out.paired.labels.push_back(out.class_names[c]);
    }
  }
  out.paired.sketch = matmul(latent_sketch, out.projection);
  for (double& v : out.paired.sketch.values()) v += sigma * rng.normal();

  out.database.role = FeatureRole::database;
  out.database.features = Matrix(n_classes * cfg.db_per_class, cfg.d_img);
  for (std::size_t c = 0; c < n_classes; ++c) {
    const auto proto = out.prototypes.row(c);
    for (std::size_t k = 0; k < cfg.db_per_class; ++k) {
      auto row = out.database.features.row(c * cfg.db_per_class + k);
      for (std::size_t j = 0; j < cfg.d_img; ++j) row[j] = proto[j] + sigma * rng.normal();
      out.database.labels.push_back(out.class_names[c]);
    }
  }
  return out;
}

}  // namespace zssbir
