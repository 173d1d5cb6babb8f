#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string_view>
#include <vector>

#include "zssbir/checkpoint.hpp"
#include "zssbir/data.hpp"
#include "zssbir/retrieval.hpp"
#include "zssbir/training.hpp"

namespace zssbir::cli {

enum class ModelChoice { cvae, caae, siamese1, siamese2, triplet_coarse, triplet_fine, regression, eszsl, sae };

ModelChoice model_from_string(std::string_view name);
std::string_view to_string(ModelChoice m);

// Zero means "use the method's default" for the counts below.
struct TrainOptions {
  ModelChoice model = ModelChoice::cvae;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  std::size_t iterations = 0;
  std::size_t batch_size = 0;
  nn::AdamConfig adam;
  std::size_t latent_dim = 64;
  std::vector<std::size_t> hidden;
  nn::Activation hidden_activation = nn::Activation::relu;
  double lambda_recons = 0.1;
  bool nonsaturating = false;
  std::size_t disc_iters = 32;
  std::size_t embed_dim = 64;
  double margin = 1.0;
  double ridge = 0.0;
  double gamma = 1.0;
  double lambda = 1.0;
};

struct TrainOutput {
  AnyModel model;
  std::vector<TraceRecord> trace;
};

// Trains or fits one model. `audit` sees every batch (closed-form fits
// present the whole training set as one batch).
TrainOutput train_model(const PairedDataset& train, const TrainOptions& opts, const BatchAudit& audit);

// Query encoder for a trained model: generative models sample n points and
// cluster them into k centroids; the other models map each sketch to a point.
retrieval::QueryEncoder encoder_for(const AnyModel& model, std::size_t n_samples, std::size_t k_clusters);

// Files written by `synth` and read by `--data DIR`.
struct DataDir {
  std::string root;
  std::string sketch() const { return root + "/sketch.zsfv"; }
  std::string image() const { return root + "/image.zsfv"; }
  std::string pair_labels() const { return root + "/pairs.labels"; }
  std::string db() const { return root + "/db.zsfv"; }
  std::string db_labels() const { return root + "/db.labels"; }
  std::string split() const { return root + "/split.json"; }
};

// Exit codes: 0 success, 1 validation failure, 2 numerical failure.
int run(int argc, const char* const* argv);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace zssbir::cli
