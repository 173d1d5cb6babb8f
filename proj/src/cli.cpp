#include "zssbir/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "zssbir/baselines.hpp"
#include "zssbir/errors.hpp"
#include "zssbir/generative.hpp"
#include "zssbir/gradcheck.hpp"

namespace zssbir::cli {
namespace {

const std::map<std::string, ModelChoice, std::less<>>& model_names() {
  static const std::map<std::string, ModelChoice, std::less<>> names{
      {"cvae", ModelChoice::cvae},
      {"caae", ModelChoice::caae},
      {"siamese1", ModelChoice::siamese1},
      {"siamese2", ModelChoice::siamese2},
      {"triplet-coarse", ModelChoice::triplet_coarse},
      {"triplet-fine", ModelChoice::triplet_fine},
      {"regression", ModelChoice::regression},
      {"eszsl", ModelChoice::eszsl},
      {"sae", ModelChoice::sae},
  };
  return names;
}

using Echo = std::vector<std::pair<std::string, std::string>>;

// Every option of a subcommand as typed on the command line, or its default.
Echo echo_options(const CLI::App& app, std::initializer_list<std::string_view> skip = {}) {
  Echo out;
  for (const CLI::Option* opt : app.get_options()) {
    const std::string& name = opt->get_single_name();
    if (name == "help" || std::find(skip.begin(), skip.end(), name) != skip.end()) continue;
    std::string value;
    if (opt->count() > 0) {
      for (const auto& r : opt->results()) value += (value.empty() ? "" : ",") + r;
    } else {
      value = opt->get_default_str();
    }
    out.emplace_back(name, value);
  }
  return out;
}

PairedDataset load_pairs(const DataDir& dir) {
  PairedDataset p;
  p.sketch = load_feature_matrix(dir.sketch());
  p.image = load_feature_matrix(dir.image());
  p.labels = load_labels(dir.pair_labels());
  p.validate();
  return p;
}

ZeroShotSplit load_split(const DataDir& dir, const std::string& manifest_path) {
  const SplitManifest manifest = read_manifest(manifest_path.empty() ? dir.split() : manifest_path);
  manifest.validate();
  const std::set<std::string> test(manifest.test_classes.begin(), manifest.test_classes.end());
  ZeroShotSplit split = make_zero_shot_split(load_pairs(dir), load_features(dir.db(), dir.db_labels()), test);
  for (const auto& c : split.train_classes) {
    if (std::find(manifest.train_classes.begin(), manifest.train_classes.end(), c) == manifest.train_classes.end()) {
      throw ConfigError("class '" + c + "' appears in the data but in neither class list of the manifest");
    }
  }
  return split;
}

std::string labels_path_for(const std::string& features) {
  std::filesystem::path p(features);
  p.replace_extension(".labels");
  return p.string();
}

void ensure_parent(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(parent, ec);
  if (ec) throw IoError("cannot create directory " + parent.string() + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
  ensure_parent(path);
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// Queries and database for retrieve/eval, either from a split data directory
// (test-class sketches against the test-class database) or from explicit files.
struct RetrievalInputs {
  Matrix queries;
  std::vector<std::string> query_labels;
  FeatureStore database;
};

struct InputFlags {
  std::string data;
  std::string split;
  std::string queries;
  std::string query_labels;
  std::string db;
  std::string db_labels;

  void add_to(CLI::App& app) {
    app.add_option("--data", data, "data directory written by synth (uses its split)");
    app.add_option("--split", split, "split manifest (default DATA/split.json)");
    app.add_option("--queries", queries, "query sketch feature file");
    app.add_option("--query-labels", query_labels, "query label file (default: next to --queries)");
    app.add_option("--db", db, "database image feature file");
    app.add_option("--db-labels", db_labels, "database label file (default: next to --db)");
  }

  RetrievalInputs load(bool need_query_labels) const {
    RetrievalInputs in;
    if (!data.empty()) {
      if (!queries.empty() || !db.empty()) throw ConfigError("use either --data or --queries/--db, not both");
      ZeroShotSplit split = load_split(DataDir{data}, this->split);
      in.queries = std::move(split.s_te.sketch);
      in.query_labels = std::move(split.s_te.labels);
      in.database = std::move(split.d_te);
      return in;
    }
    if (queries.empty() || db.empty()) throw ConfigError("either --data or both --queries and --db are required");
    in.queries = load_feature_matrix(queries);
    if (need_query_labels) {
      in.query_labels = load_labels(query_labels.empty() ? labels_path_for(queries) : query_labels);
      if (in.query_labels.size() != in.queries.rows()) {
        throw ConsistencyError("query features have " + std::to_string(in.queries.rows()) + " rows but " +
                               std::to_string(in.query_labels.size()) + " labels");
      }
    }
    in.database = load_features(db, db_labels.empty() ? labels_path_for(db) : db_labels);
    return in;
  }
};

struct RetrievalFlags {
  std::string checkpoint;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t samples = retrieval::kDefaultSamples;
  std::size_t clusters = retrieval::kDefaultClusters;
  std::size_t cutoff = retrieval::kDefaultCutoff;
  std::size_t threads = 1;
  InputFlags inputs;

  void add_to(CLI::App& app) {
    app.add_option("--checkpoint", checkpoint, "trained model")->required();
    app.add_option("--out", out, "output file")->required();
    app.add_option("--seed", seed, "seed for generative sampling")->required();
    app.add_option("--samples", samples, "samples generated per query (N)");
    app.add_option("--clusters", clusters, "K-means clusters per query (K)");
    app.add_option("--cutoff", cutoff, "number of retrieved images");
    app.add_option("--threads", threads, "worker threads for per-query scoring");
    inputs.add_to(app);
  }

  retrieval::EvalConfig eval_config(const CLI::App& app) const {
    retrieval::EvalConfig cfg;
    cfg.cutoff = cutoff;
    cfg.seed = seed;
    cfg.threads = threads;
    cfg.echo = echo_options(app, {"threads"});
    return cfg;
  }
};

int cmd_synth(const SyntheticConfig& cfg, const std::string& out_dir, std::ostream& out) {
  cfg.validate();
  const SyntheticData data = synth_generate(cfg);
  const DataDir dir{out_dir};
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory " + out_dir + ": " + ec.message());
  save_feature_matrix(dir.sketch(), data.paired.sketch);
  save_feature_matrix(dir.image(), data.paired.image);
  save_labels(dir.pair_labels(), data.paired.labels);
  save_features(data.database, dir.db(), dir.db_labels());
  SplitManifest manifest;
  for (const auto& name : data.class_names) {
    (data.test_classes.count(name) ? manifest.test_classes : manifest.train_classes).push_back(name);
  }
  write_manifest(dir.split(), manifest);
  out << "wrote " << data.paired.size() << " sketch/image pairs and " << data.database.size()
      << " database images to " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& data_dir, const std::string& manifest, const std::string& out_path,
              const std::string& trace_path, const TrainOptions& opts, std::ostream& out) {
  const ZeroShotSplit split = load_split(DataDir{data_dir}, manifest);
  split.check_invariants();
  const SplitStats st = split.stats();
  out << "split: " << st.train_classes << " train classes (" << st.train_sketches << " pairs), "
      << st.test_classes << " test classes held out\n";

  const TrainOutput result = train_model(split.s_tr, opts, split_guard(split.test_classes));
  ensure_parent(out_path);
  save_checkpoint(result.model, out_path);
  const std::string trace_file = trace_path.empty() ? out_path + ".trace.jsonl" : trace_path;
  ensure_parent(trace_file);
  write_trace_file(trace_file, result.trace);

  if (!result.trace.empty()) {
    const TraceRecord& last = result.trace.back();
    out << "final " << last.phase << " " << last.index << ":";
    for (const auto& [name, value] : last.values) out << " " << name << "=" << value;
    out << "\n";
  }
  out << "checkpoint: " << out_path << "\ntrace: " << trace_file << "\n";
  return 0;
}

int cmd_retrieve(const RetrievalFlags& flags, const CLI::App& app, std::ostream& out) {
  const AnyModel model = load_checkpoint(flags.checkpoint);
  const RetrievalInputs in = flags.inputs.load(false);
  const retrieval::EvalConfig cfg = flags.eval_config(app);
  const auto encoder = encoder_for(model, flags.samples, flags.clusters);
  std::size_t degenerate = 0;
  const auto lists = retrieval::retrieve_all(in.queries, in.database.features, encoder, cfg, &degenerate);

  nlohmann::ordered_json header;
  header["format"] = "zssbir-ranked-lists";
  header["source"] = encoder.source;
  auto& conf = header["config"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : cfg.echo) conf[k] = v;
  header["seed"] = cfg.seed;
  header["n_queries"] = lists.size();
  write_text(flags.out, header.dump() + "\n" + retrieval::ranked_lists_to_jsonl(lists));
  if (degenerate > 0) out << "warning: " << degenerate << " database rows have zero norm and were ranked last\n";
  out << "ranked " << lists.size() << " queries against " << in.database.size() << " images -> " << flags.out
      << "\n";
  return 0;
}

int cmd_eval(const RetrievalFlags& flags, const CLI::App& app, std::ostream& out) {
  const AnyModel model = load_checkpoint(flags.checkpoint);
  const RetrievalInputs in = flags.inputs.load(true);
  const retrieval::EvalConfig cfg = flags.eval_config(app);
  const auto report =
      retrieval::evaluate_run(in.queries, in.query_labels, in.database, encoder_for(model, flags.samples, flags.clusters), cfg);
  write_text(flags.out, report.to_json());
  if (report.degenerate_db_rows > 0) {
    out << "warning: " << report.degenerate_db_rows << " database rows have zero norm and were ranked last\n";
  }
  out << report.source << ": precision@" << report.cutoff << "=" << report.mean_precision << " map@"
      << report.cutoff << "=" << report.mean_average_precision << " over " << report.queries.size()
      << " queries -> " << flags.out << "\n";
  return 0;
}

int cmd_gradcheck(const GradcheckOptions& opts, std::ostream& out) {
  const auto rows = run_gradcheck(opts);
  out << format_gradcheck_table(rows);
  const bool ok = std::all_of(rows.begin(), rows.end(), [](const GradcheckRow& r) { return r.passed; });
  out << (ok ? "all gradient checks passed\n" : "gradient check FAILED\n");
  return ok ? 0 : 1;
}

}  // namespace

ModelChoice model_from_string(std::string_view name) {
  const auto it = model_names().find(name);
  if (it == model_names().end()) throw ConfigError("unknown model kind '" + std::string(name) + "'");
  return it->second;
}

std::string_view to_string(ModelChoice m) {
  for (const auto& [name, value] : model_names()) {
    if (value == m) return name;
  }
  return "unknown";
}

TrainOutput train_model(const PairedDataset& train, const TrainOptions& opts, const BatchAudit& audit) {
  train.validate();
  if (train.size() == 0) throw ConfigError("training set is empty");
  auto generative_config = [&] {
    generative::ModelConfig mc;
    mc.d_img = train.image.cols();
    mc.d_sketch = train.sketch.cols();
    mc.d_latent = opts.latent_dim;
    mc.hidden = opts.hidden;
    mc.hidden_activation = opts.hidden_activation;
    mc.lambda_recons = opts.lambda_recons;
    mc.nonsaturating = opts.nonsaturating;
    return mc;
  };
  auto train_config = [&](TrainConfig tc) {
    if (opts.epochs > 0) tc.epochs = opts.epochs;
    if (opts.iterations > 0) tc.iterations = opts.iterations;
    if (opts.batch_size > 0) tc.batch_size = opts.batch_size;
    tc.adam = opts.adam;
    tc.disc_iters_per_gen = opts.disc_iters;
    tc.audit = audit;
    return tc;
  };
  auto whole_set = [&] {
    if (!audit) return;
    std::vector<std::size_t> rows(train.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    audit(train, rows);
  };
  auto linear_output = [](baselines::LinearMap map) {
    TraceRecord rec{"fit", 0, {{"objective", map.meta.objective}}};
    return TrainOutput{std::move(map), {rec}};
  };

  switch (opts.model) {
    case ModelChoice::cvae: {
      auto r = generative::train_cvae(train, generative_config(), train_config(TrainConfig::cvae_defaults(opts.seed)));
      return {std::move(r.model), std::move(r.trace)};
    }
    case ModelChoice::caae: {
      auto r = generative::train_caae(train, generative_config(), train_config(TrainConfig::caae_defaults(opts.seed)));
      return {std::move(r.model), std::move(r.trace)};
    }
    case ModelChoice::siamese1:
    case ModelChoice::siamese2:
    case ModelChoice::triplet_coarse:
    case ModelChoice::triplet_fine: {
      baselines::EmbeddingConfig ec;
      ec.embed_dim = opts.embed_dim;
      if (!opts.hidden.empty()) ec.hidden = opts.hidden;
      ec.hidden_activation = opts.hidden_activation;
      ec.margin = opts.margin;
      ec.epochs = opts.epochs;
      if (opts.batch_size > 0) ec.batch_size = opts.batch_size;
      ec.adam = opts.adam;
      ec.seed = opts.seed;
      ec.audit = audit;
      const auto loss = opts.model == ModelChoice::siamese1         ? baselines::EmbeddingLoss::siamese1
                        : opts.model == ModelChoice::siamese2       ? baselines::EmbeddingLoss::siamese2
                        : opts.model == ModelChoice::triplet_coarse ? baselines::EmbeddingLoss::triplet_coarse
                                                                    : baselines::EmbeddingLoss::triplet_fine;
      auto r = baselines::train_embedding(train, loss, ec);
      return {std::move(r.model), std::move(r.trace)};
    }
    case ModelChoice::regression:
      whole_set();
      return linear_output(baselines::fit_direct_regression(train.sketch, train.image, opts.ridge));
    case ModelChoice::eszsl:
      whole_set();
      return linear_output(baselines::fit_eszsl(train.sketch, train.image, opts.gamma, opts.lambda));
    case ModelChoice::sae:
      whole_set();
      return linear_output(baselines::fit_sae(train.sketch, train.image, opts.lambda));
  }
  throw ConfigError("unknown model kind");
}

retrieval::QueryEncoder encoder_for(const AnyModel& model, std::size_t n_samples, std::size_t k_clusters) {
  return std::visit(
      [&](const auto& m) -> retrieval::QueryEncoder {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, generative::CvaeModel>) {
          return retrieval::generative_encoder(
              "cvae", [m](std::span<const double> s, std::size_t n, Rng& rng) { return generative::cvae_generate(m, s, n, rng); },
              n_samples, k_clusters);
        } else if constexpr (std::is_same_v<M, generative::CaaeModel>) {
          return retrieval::generative_encoder(
              "caae", [m](std::span<const double> s, std::size_t n, Rng& rng) { return generative::caae_generate(m, s, n, rng); },
              n_samples, k_clusters);
        } else if constexpr (std::is_same_v<M, baselines::LinearMap>) {
          const std::size_t d_sketch = m.w.rows();
          return retrieval::point_encoder(std::string(baselines::to_string(m.meta.method)),
                                          [m, d_sketch](std::span<const double> s) {
                                            if (s.size() != d_sketch) {
                                              throw DimensionError("query has " + std::to_string(s.size()) +
                                                                   " features, model expects " + std::to_string(d_sketch));
                                            }
                                            return m.apply(s);
                                          });
        } else {
          auto pair = std::make_shared<const baselines::EmbeddingPair>(m);
          return retrieval::point_encoder(
              std::string(baselines::to_string(m.loss)),
              [pair](std::span<const double> s) {
                const Matrix e = pair->embed_sketches(Matrix::row_vector(Vector(s.begin(), s.end())));
                return Vector(e.row(0).begin(), e.row(0).end());
              },
              [pair](const Matrix& db) {
                if (db.cols() != pair->image_net.input_dim()) {
                  throw DimensionError("database has " + std::to_string(db.cols()) + " features, model expects " +
                                       std::to_string(pair->image_net.input_dim()));
                }
                return pair->embed_images(db);
              });
        }
      },
      model);
}

int run(int argc, const char* const* argv) { return run(argc, argv, std::cout, std::cerr); }

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Zero-shot sketch-based image retrieval feature-space lab", "zssbir"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  // synth
  SyntheticConfig synth;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic sketch/image benchmark");
  synth_cmd->option_defaults()->always_capture_default();
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "generator seed")->required();
  synth_cmd->add_option("--train-classes", synth.n_classes_train);
  synth_cmd->add_option("--test-classes", synth.n_classes_test);
  synth_cmd->add_option("--d-img", synth.d_img);
  synth_cmd->add_option("--d-sketch", synth.d_sketch);
  synth_cmd->add_option("--pairs-per-class", synth.pairs_per_class);
  synth_cmd->add_option("--db-per-class", synth.db_per_class);
  synth_cmd->add_option("--sigma", synth.noise_sigma, "noise standard deviation");

  // train
  TrainOptions train;
  std::string train_data, train_split, train_out, train_trace, model_name;
  auto* train_cmd = app.add_subcommand("train", "train or fit a model on the training classes");
  train_cmd->option_defaults()->always_capture_default();
  train_cmd->add_option("--data", train_data, "data directory")->required();
  train_cmd->add_option("--split", train_split, "split manifest (default DATA/split.json)");
  train_cmd->add_option("--model", model_name,
                        "cvae|caae|siamese1|siamese2|triplet-coarse|triplet-fine|regression|eszsl|sae")
      ->required();
  train_cmd->add_option("--out", train_out, "checkpoint path")->required();
  train_cmd->add_option("--trace", train_trace, "loss trace path (default OUT.trace.jsonl)");
  train_cmd->add_option("--seed", train.seed, "training seed")->required();
  train_cmd->add_option("--epochs", train.epochs, "0 = method default");
  train_cmd->add_option("--iterations", train.iterations, "CAAE generator iterations, 0 = default");
  train_cmd->add_option("--batch-size", train.batch_size, "0 = method default");
  train_cmd->add_option("--lr", train.adam.lr);
  train_cmd->add_option("--beta1", train.adam.beta1);
  train_cmd->add_option("--beta2", train.adam.beta2);
  train_cmd->add_option("--latent-dim", train.latent_dim);
  train_cmd->add_option("--hidden", train.hidden, "hidden widths, comma separated")->delimiter(',');
  std::string activation_name = "relu";
  train_cmd->add_option("--activation", activation_name, "hidden activation: relu|tanh");
  train_cmd->add_option("--lambda-recons", train.lambda_recons, "sketch reconstruction weight");
  train_cmd->add_flag("--nonsaturating", train.nonsaturating, "CAAE encoder uses -log D(E(x))");
  train_cmd->add_option("--disc-iters", train.disc_iters, "discriminator steps per generator step");
  train_cmd->add_option("--embed-dim", train.embed_dim);
  train_cmd->add_option("--margin", train.margin);
  train_cmd->add_option("--ridge", train.ridge, "regression ridge");
  train_cmd->add_option("--gamma", train.gamma, "ESZSL gamma");
  train_cmd->add_option("--lambda", train.lambda, "ESZSL/SAE lambda");

  // retrieve / eval
  RetrievalFlags retrieve_flags;
  auto* retrieve_cmd = app.add_subcommand("retrieve", "write ranked lists for every query");
  retrieve_cmd->option_defaults()->always_capture_default();
  retrieve_flags.add_to(*retrieve_cmd);
  RetrievalFlags eval_flags;
  auto* eval_cmd = app.add_subcommand("eval", "write per-query and mean Precision@K / mAP@K");
  eval_cmd->option_defaults()->always_capture_default();
  eval_flags.add_to(*eval_cmd);

  // gradcheck
  GradcheckOptions grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference and stationarity checks for every loss");
  grad_cmd->option_defaults()->always_capture_default();
  grad_cmd->add_option("--seed", grad.seed, "instance seed");
  grad_cmd->add_option("--corrupt", grad.corrupt, "damage one row's gradient (negative control)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth_cmd) return cmd_synth(synth, synth_out, out);
    if (*train_cmd) {
      train.model = model_from_string(model_name);
      train.hidden_activation = nn::activation_from_string(activation_name);
      return cmd_train(train_data, train_split, train_out, train_trace, train, out);
    }
    if (*retrieve_cmd) return cmd_retrieve(retrieve_flags, *retrieve_cmd, out);
    if (*eval_cmd) return cmd_eval(eval_flags, *eval_cmd, out);
    if (*grad_cmd) return cmd_gradcheck(grad, out);
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const SplitViolation& e) {
    err << "split violation: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace zssbir::cli
