#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "zssbir/nn.hpp"
#include "zssbir/rng.hpp"

namespace zssbir {

struct PairedDataset;

// Called with the dataset and the row indices of every batch a trainer
// consumes, before the batch is used.
using BatchAudit = std::function<void(const PairedDataset&, std::span<const std::size_t>)>;

struct TrainConfig {
  std::size_t epochs = 25;
  std::size_t iterations = 6000;  // generator iterations for adversarial training
  std::size_t batch_size = 64;
  nn::AdamConfig adam;
  std::size_t disc_iters_per_gen = 32;
  std::uint64_t seed = 0;
  BatchAudit audit;

  static TrainConfig cvae_defaults(std::uint64_t seed);
  static TrainConfig caae_defaults(std::uint64_t seed);
  void validate() const;
};

// One line of a loss trace: {"phase":..., "index":..., "<name>":value, ...}.
struct TraceRecord {
  std::string phase;
  std::size_t index = 0;
  std::vector<std::pair<std::string, double>> values;

  double get(const std::string& name) const;
};

void write_trace(std::ostream& out, std::span<const TraceRecord> trace);
void write_trace_file(const std::string& path, std::span<const TraceRecord> trace);

// Splits 0..n-1 into shuffled batches; the last partial batch is kept.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, Rng& rng);

// Endless batch source that reshuffles at every epoch boundary.
class BatchStream {
 public:
  BatchStream(std::size_t n, std::size_t batch_size, Rng rng);
  std::span<const std::size_t> next();

 private:
  std::size_t n_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::vector<std::size_t>> batches_;
  std::size_t cursor_ = 0;
};

}  // namespace zssbir
