#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "zssbir/data.hpp"
#include "zssbir/matrix.hpp"
#include "zssbir/rng.hpp"

namespace zssbir::retrieval {

// Draws n image-feature samples conditioned on one sketch.
using SampleGenerator = std::function<Matrix(std::span<const double> sketch, std::size_t n, Rng& rng)>;

struct QueryRepresentation {
  Matrix centroids;  // K × d_img
  std::string source;
  std::size_t n_samples = 0;
  std::size_t k_clusters = 0;
  std::uint64_t seed = 0;
};

inline constexpr std::size_t kDefaultSamples = 200;
inline constexpr std::size_t kDefaultClusters = 5;
inline constexpr std::size_t kDefaultCutoff = 200;

// Generates n samples for the sketch and clusters them into k centroids.
QueryRepresentation build_query_representation(const SampleGenerator& generator, std::span<const double> sketch,
                                               std::size_t n, std::size_t k, Rng& rng, std::string source = {});

struct Scores {
  Vector values;                    // one per database row, higher is closer
  std::size_t degenerate_rows = 0;  // zero-norm rows, scored -inf
};

// score(x) = max_k cos(x, C_k).
Scores score_database(const Matrix& centroids, const Matrix& database);
inline Scores score_database(const QueryRepresentation& q, const Matrix& database) {
  return score_database(q.centroids, database);
}

struct RankedList {
  std::size_t query = 0;
  std::vector<std::size_t> indices;  // best first; ties by ascending index
  Vector scores;
};

RankedList rank_top_k(std::span<const double> scores, std::size_t cutoff, std::size_t query = 0);

// (# of ranked_labels[0..min(k, len)) equal to query_label) / k
double precision_at_k(std::span<const std::string> ranked_labels, const std::string& query_label, std::size_t k);

// Σ_{i ≤ k, rel_i} Precision@i / min(R, k); 0 when min(R, k) = 0.
double average_precision_at_k(std::span<const std::string> ranked_labels, const std::string& query_label,
                              std::size_t k, std::size_t total_relevant);

inline constexpr const char* kMapDefinition =
    "AP@K = sum over relevant ranks i <= K of Precision@i, divided by min(R, K) where R is the number of "
    "database items sharing the query class; mAP@K is the mean over queries";

// How a method turns a sketch into centroids and, optionally, maps the
// database into the space the centroids live in.
struct QueryEncoder {
  std::string source;
  std::size_t n_samples = 1;
  std::size_t k_clusters = 1;
  std::function<Matrix(std::span<const double> sketch, Rng& rng)> represent;
  std::function<Matrix(const Matrix& database)> transform_database;
};

QueryEncoder generative_encoder(std::string source, SampleGenerator generator, std::size_t n, std::size_t k);
// Deterministic methods: the mapped sketch is the single centroid.
QueryEncoder point_encoder(std::string source, std::function<Vector(std::span<const double>)> map,
                           std::function<Matrix(const Matrix&)> transform_database = {});

struct EvalConfig {
  std::size_t cutoff = kDefaultCutoff;
  std::uint64_t seed = 0;
  std::size_t threads = 1;  // > 1 scores queries concurrently
  std::vector<std::pair<std::string, std::string>> echo;  // config lines copied into reports
};

struct QueryMetrics {
  std::size_t query = 0;
  std::string label;
  double precision = 0.0;
  double average_precision = 0.0;
};

struct MetricsReport {
  std::size_t cutoff = 0;
  std::vector<QueryMetrics> queries;
  double mean_precision = 0.0;
  double mean_average_precision = 0.0;
  std::size_t degenerate_db_rows = 0;
  std::uint64_t seed = 0;
  std::string source;
  std::vector<std::pair<std::string, std::string>> config;

  std::string to_json() const;
};

// Ranked lists for every query row, in query order. Each query uses its own
// generator Rng::derive(seed, query index), so results do not depend on the
// thread count.
std::vector<RankedList> retrieve_all(const Matrix& queries, const Matrix& database, const QueryEncoder& encoder,
                                     const EvalConfig& cfg, std::size_t* degenerate_rows = nullptr);

MetricsReport evaluate_run(const Matrix& queries, std::span<const std::string> query_labels,
                           const FeatureStore& database, const QueryEncoder& encoder, const EvalConfig& cfg);

std::string ranked_lists_to_jsonl(std::span<const RankedList> lists);

}  // namespace zssbir::retrieval
