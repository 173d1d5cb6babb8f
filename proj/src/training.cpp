#include "zssbir/training.hpp"

#include <fstream>
#include <numeric>
#include <ostream>

#include "zssbir/errors.hpp"

#include <json.hpp>

namespace zssbir {

TrainConfig TrainConfig::cvae_defaults(std::uint64_t seed) {
  TrainConfig c;
  c.epochs = 25;
  c.batch_size = 64;
  c.seed = seed;
  return c;
}

TrainConfig TrainConfig::caae_defaults(std::uint64_t seed) {
  TrainConfig c;
  c.iterations = 6000;
  c.batch_size = 128;
  c.disc_iters_per_gen = 32;
  c.seed = seed;
  return c;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (disc_iters_per_gen == 0) throw ConfigError("disc_iters_per_gen must be at least 1");
  if (!(adam.lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
}

double TraceRecord::get(const std::string& name) const {
  for (const auto& [k, v] : values) {
    if (k == name) return v;
  }
  throw ConfigError("trace record has no field '" + name + "'");
}

void write_trace(std::ostream& out, std::span<const TraceRecord> trace) {
  for (const auto& rec : trace) {
    nlohmann::ordered_json line;
    line["phase"] = rec.phase;
    line["index"] = rec.index;
    for (const auto& [k, v] : rec.values) line[k] = v;
    out << line.dump() << '\n';
  }
}

void write_trace_file(const std::string& path, std::span<const TraceRecord> trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_trace(out, trace);
  if (!out) throw IoError("failed writing '" + path + "'");
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(order, rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

BatchStream::BatchStream(std::size_t n, std::size_t batch_size, Rng rng)
    : n_(n), batch_size_(batch_size), rng_(rng) {
  if (n == 0) throw ConfigError("BatchStream: empty dataset");
}

std::span<const std::size_t> BatchStream::next() {
  if (cursor_ == batches_.size()) {
    batches_ = epoch_batches(n_, batch_size_, rng_);
    cursor_ = 0;
  }
  return batches_[cursor_++];
}

}  // namespace zssbir
