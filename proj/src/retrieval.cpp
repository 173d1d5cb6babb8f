#include "zssbir/retrieval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "zssbir/errors.hpp"
#include "zssbir/linalg.hpp"

#include <json.hpp>

namespace zssbir::retrieval {

QueryRepresentation build_query_representation(const SampleGenerator& generator, std::span<const double> sketch,
                                               std::size_t n, std::size_t k, Rng& rng, std::string source) {
  if (k == 0 || n < k) {
    throw CardinalityError("build_query_representation: need n >= k >= 1 (n=" + std::to_string(n) +
                           ", k=" + std::to_string(k) + ")");
  }
  QueryRepresentation q;
  q.seed = rng.seed();
  const Matrix samples = generator(sketch, n, rng);
  if (samples.rows() != n) throw DimensionError("generator returned the wrong number of samples");
  q.centroids = kmeans(samples, k, rng).centroids;
  q.source = std::move(source);
  q.n_samples = n;
  q.k_clusters = k;
  return q;
}

Scores score_database(const Matrix& centroids, const Matrix& database) {
  if (centroids.cols() != database.cols()) {
    throw DimensionError("score_database: centroids have " + std::to_string(centroids.cols()) +
                         " features, database rows have " + std::to_string(database.cols()));
  }
  std::vector<std::size_t> usable;
  Vector centroid_norms(centroids.rows());
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    centroid_norms[c] = norm(centroids.row(c));
    if (centroid_norms[c] > 0.0) usable.push_back(c);
  }
  if (usable.empty()) throw DegenerateInputError("score_database: every centroid has zero norm");

  Scores out;
  out.values.assign(database.rows(), -std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < database.rows(); ++r) {
    const auto x = database.row(r);
    const double xn = norm(x);
    if (xn == 0.0) {
      ++out.degenerate_rows;
      continue;
    }
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t c : usable) {
      const double s = std::clamp(dot(x, centroids.row(c)) / (xn * centroid_norms[c]), -1.0, 1.0);
      best = std::max(best, s);
    }
    out.values[r] = best;
  }
  return out;
}

RankedList rank_top_k(std::span<const double> scores, std::size_t cutoff, std::size_t query) {
  if (cutoff == 0) throw ConfigError("rank_top_k: cutoff must be at least 1");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t take = std::min(cutoff, order.size());
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), better);
  RankedList out;
  out.query = query;
  out.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
  for (std::size_t i : out.indices) out.scores.push_back(scores[i]);
  return out;
}

double precision_at_k(std::span<const std::string> ranked_labels, const std::string& query_label, std::size_t k) {
  if (k == 0) throw ConfigError("precision_at_k: k must be at least 1");
  const std::size_t limit = std::min(k, ranked_labels.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < limit; ++i) hits += ranked_labels[i] == query_label ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(k);
}

double average_precision_at_k(std::span<const std::string> ranked_labels, const std::string& query_label,
                              std::size_t k, std::size_t total_relevant) {
  if (k == 0) throw ConfigError("average_precision_at_k: k must be at least 1");
  const std::size_t denom = std::min(total_relevant, k);
  if (denom == 0) return 0.0;
  const std::size_t limit = std::min(k, ranked_labels.size());
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < limit; ++i) {
    if (ranked_labels[i] != query_label) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  return sum / static_cast<double>(denom);
}

QueryEncoder generative_encoder(std::string source, SampleGenerator generator, std::size_t n, std::size_t k) {
  if (k == 0 || n < k) throw CardinalityError("generative_encoder: need n >= k >= 1");
  QueryEncoder enc;
  enc.source = source;
  enc.n_samples = n;
  enc.k_clusters = k;
  enc.represent = [gen = std::move(generator), n, k, source](std::span<const double> sketch, Rng& rng) {
    return build_query_representation(gen, sketch, n, k, rng, source).centroids;
  };
  return enc;
}

QueryEncoder point_encoder(std::string source, std::function<Vector(std::span<const double>)> map,
                           std::function<Matrix(const Matrix&)> transform_database) {
  QueryEncoder enc;
  enc.source = std::move(source);
  enc.represent = [f = std::move(map)](std::span<const double> sketch, Rng&) {
    return Matrix::row_vector(f(sketch));
  };
  enc.transform_database = std::move(transform_database);
  return enc;
}

std::vector<RankedList> retrieve_all(const Matrix& queries, const Matrix& database, const QueryEncoder& encoder,
                                     const EvalConfig& cfg, std::size_t* degenerate_rows) {
  if (database.rows() == 0) throw ConfigError("retrieval database is empty");
  if (cfg.cutoff == 0) throw ConfigError("cutoff must be at least 1");
  if (!encoder.represent) throw ConfigError("query encoder has no representation function");
  const Matrix db = encoder.transform_database ? encoder.transform_database(database) : database;

  std::vector<RankedList> lists(queries.rows());
  std::vector<std::size_t> degenerate(queries.rows(), 0);
  auto run_one = [&](std::size_t q) {
    Rng rng = Rng::derive(cfg.seed, q);
    const Matrix centroids = encoder.represent(queries.row(q), rng);
    const Scores scores = score_database(centroids, db);
    degenerate[q] = scores.degenerate_rows;
    lists[q] = rank_top_k(scores.values, cfg.cutoff, q);
  };

  const std::size_t threads = std::min(std::max<std::size_t>(cfg.threads, 1), std::max<std::size_t>(queries.rows(), 1));
  if (threads <= 1) {
    for (std::size_t q = 0; q < queries.rows(); ++q) run_one(q);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t q = next++; q < queries.rows(); q = next++) {
          try {
            run_one(q);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }
  // Zero-norm rows depend only on the database, so every query sees the same count.
  if (degenerate_rows) *degenerate_rows = degenerate.empty() ? 0 : degenerate.front();
  return lists;
}

MetricsReport evaluate_run(const Matrix& queries, std::span<const std::string> query_labels,
                           const FeatureStore& database, const QueryEncoder& encoder, const EvalConfig& cfg) {
  database.validate();
  if (queries.rows() == 0) throw ConfigError("evaluate_run: empty query set");
  if (query_labels.size() != queries.rows()) throw ConsistencyError("evaluate_run: one label per query required");

  MetricsReport report;
  report.cutoff = cfg.cutoff;
  report.seed = cfg.seed;
  report.source = encoder.source;
  report.config = cfg.echo;
  const auto lists = retrieve_all(queries, database.features, encoder, cfg, &report.degenerate_db_rows);

  std::map<std::string, std::size_t> relevant;
  for (const auto& l : database.labels) ++relevant[l];

  std::vector<std::string> ranked;
  for (std::size_t q = 0; q < lists.size(); ++q) {
    ranked.clear();
    for (std::size_t idx : lists[q].indices) ranked.push_back(database.labels[idx]);
    const auto it = relevant.find(query_labels[q]);
    const std::size_t r = it == relevant.end() ? 0 : it->second;
    QueryMetrics m{q, query_labels[q], precision_at_k(ranked, query_labels[q], cfg.cutoff),
                   average_precision_at_k(ranked, query_labels[q], cfg.cutoff, r)};
    report.mean_precision += m.precision;
    report.mean_average_precision += m.average_precision;
    report.queries.push_back(std::move(m));
  }
  report.mean_precision /= static_cast<double>(report.queries.size());
  report.mean_average_precision /= static_cast<double>(report.queries.size());
  return report;
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json doc;
  doc["format"] = "zssbir-metrics";
  doc["version"] = 1;
  doc["source"] = source;
  doc["cutoff"] = cutoff;
  auto& rows = doc["queries"] = nlohmann::ordered_json::array();
  for (const auto& q : queries) {
    nlohmann::ordered_json r;
    r["query"] = q.query;
    r["class"] = q.label;
    r["precision_at_k"] = q.precision;
    r["ap_at_k"] = q.average_precision;
    rows.push_back(std::move(r));
  }
  auto& agg = doc["aggregate"];
  agg["n_queries"] = queries.size();
  agg["mean_precision_at_k"] = mean_precision;
  agg["map_at_k"] = mean_average_precision;
  agg["map_definition"] = kMapDefinition;
  doc["degenerate_db_rows"] = degenerate_db_rows;
  auto& conf = doc["config"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config) conf[k] = v;
  doc["seed"] = seed;
  return doc.dump(2) + "\n";
}

std::string ranked_lists_to_jsonl(std::span<const RankedList> lists) {
  std::ostringstream out;
  for (const auto& l : lists) {
    nlohmann::ordered_json line;
    line["query"] = l.query;
    line["indices"] = l.indices;
    line["scores"] = l.scores;
    out << line.dump() << '\n';
  }
  return out.str();
}

}  // namespace zssbir::retrieval
