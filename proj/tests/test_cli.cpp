#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "zssbir/baselines.hpp"
#include "zssbir/checkpoint.hpp"
#include "zssbir/cli.hpp"
#include "zssbir/errors.hpp"
#include "zssbir/gradcheck.hpp"

using namespace zssbir;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "zssbir");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "zssbir_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

// Small synthetic data directory shared by most tests.
std::string small_data(const std::string& name, const std::string& seed = "5") {
  const std::string dir = fresh_dir(name);
  const auto r = run_cli({"synth", "--out", dir, "--seed", seed, "--train-classes", "4", "--test-classes", "2",
                          "--d-img", "8", "--d-sketch", "4", "--pairs-per-class", "10", "--db-per-class", "6"});
  EXPECT_EQ(r.code, 0) << r.err;
  return dir;
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  return nlohmann::json::parse(in);
}

int exit_status(const std::string& cmd) {
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

}  // namespace

TEST(CliSynth, WritesReloadableDeterministicFiles) {
  const std::string a = small_data("synth_a", "9");
  const std::string b = small_data("synth_b", "9");
  for (const char* f : {"sketch.zsfv", "image.zsfv", "pairs.labels", "db.zsfv", "db.labels", "split.json"}) {
    ASSERT_TRUE(fs::exists(fs::path(a) / f)) << f;
    EXPECT_EQ(read_file_bytes((fs::path(a) / f).string()), read_file_bytes((fs::path(b) / f).string())) << f;
  }
  SyntheticConfig cfg;
  cfg.n_classes_train = 4;
  cfg.n_classes_test = 2;
  cfg.d_img = 8;
  cfg.d_sketch = 4;
  cfg.pairs_per_class = 10;
  cfg.db_per_class = 6;
  cfg.seed = 9;
  const auto mem = synth_generate(cfg);
  const Matrix sketch = load_feature_matrix(a + "/sketch.zsfv");
  ASSERT_EQ(sketch.rows(), mem.paired.sketch.rows());
  for (std::size_t i = 0; i < sketch.size(); ++i) {
    EXPECT_EQ(sketch.values()[i], static_cast<double>(static_cast<float>(mem.paired.sketch.values()[i])));
  }
  EXPECT_EQ(load_labels(a + "/db.labels"), mem.database.labels);
  const auto manifest = read_manifest(a + "/split.json");
  EXPECT_EQ(manifest.test_classes.size(), 2u);
}

TEST(CliSynth, UnwritablePathIsIoFailure) {
  const std::string dir = fresh_dir("blocked");
  std::ofstream(dir + "/file") << "x";
  const auto r = run_cli({"synth", "--out", dir + "/file/sub", "--seed", "1"});
  EXPECT_EQ(r.code, 1);
}

TEST(CliArgs, SeedIsMandatory) {
  const std::string dir = fresh_dir("noseed");
  EXPECT_EQ(run_cli({"synth", "--out", dir}).code, 1);
  EXPECT_EQ(run_cli({}).code, 1);
  EXPECT_EQ(run_cli({"train", "--data", dir, "--model", "cvae", "--out", dir + "/m.zsck"}).code, 1);
}

TEST(CliTrain, CvaeRunsAndWritesTrace) {
  const std::string dir = small_data("train_cvae");
  const auto r = run_cli({"train", "--data", dir, "--model", "cvae", "--seed", "1", "--epochs", "3", "--out",
                          dir + "/cvae.zsck", "--latent-dim", "4", "--hidden", "16,16"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto model = load_checkpoint_as<generative::CvaeModel>(dir + "/cvae.zsck");
  EXPECT_EQ(model.d_latent, 4u);
  std::ifstream trace(dir + "/cvae.zsck.trace.jsonl");
  std::string line, last;
  std::size_t lines = 0;
  while (std::getline(trace, line)) {
    last = line;
    ++lines;
  }
  EXPECT_EQ(lines, 3u);
  EXPECT_TRUE(std::isfinite(nlohmann::json::parse(last).at("total").get<double>()));
}

TEST(CliTrain, EveryModelKindTrains) {
  const std::string dir = small_data("train_all");
  for (const char* kind : {"caae", "siamese1", "siamese2", "triplet-coarse", "triplet-fine", "regression", "eszsl",
                           "sae"}) {
    const auto r = run_cli({"train", "--data", dir, "--model", kind, "--seed", "2", "--epochs", "1", "--iterations",
                            "3", "--disc-iters", "2", "--hidden", "8", "--embed-dim", "4", "--latent-dim", "3",
                            "--out", dir + "/" + kind + ".zsck"});
    EXPECT_EQ(r.code, 0) << kind << ": " << r.err;
  }
  EXPECT_EQ(run_cli({"train", "--data", dir, "--model", "dsh", "--seed", "1", "--out", dir + "/x.zsck"}).code, 1);
}

TEST(CliTrain, OverlappingManifestRefusedWithClassNamed) {
  const std::string dir = small_data("overlap");
  auto manifest = read_manifest(dir + "/split.json");
  manifest.test_classes.push_back(manifest.train_classes.front());
  write_manifest(dir + "/bad.json", manifest);
  const auto r = run_cli({"train", "--data", dir, "--split", dir + "/bad.json", "--model", "regression", "--seed",
                          "1", "--out", dir + "/m.zsck"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find(manifest.train_classes.front()), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir + "/m.zsck"));
}

TEST(CliTrain, FitsOnTrainClassesOnly) {
  const std::string dir = small_data("train_only");
  ASSERT_EQ(run_cli({"train", "--data", dir, "--model", "eszsl", "--seed", "1", "--gamma", "0.5", "--lambda", "2",
                     "--out", dir + "/eszsl.zsck"})
                .code,
            0);
  const auto loaded = load_checkpoint_as<baselines::LinearMap>(dir + "/eszsl.zsck");

  PairedDataset paired{load_feature_matrix(dir + "/sketch.zsfv"), load_feature_matrix(dir + "/image.zsfv"),
                       load_labels(dir + "/pairs.labels")};
  const auto manifest = read_manifest(dir + "/split.json");
  const auto split = make_zero_shot_split(paired, load_features(dir + "/db.zsfv", dir + "/db.labels"),
                                          {manifest.test_classes.begin(), manifest.test_classes.end()});
  EXPECT_EQ(loaded, baselines::fit_eszsl(split.s_tr.sketch, split.s_tr.image, 0.5, 2.0));
}

TEST(CliTrain, SingularFitExitsWithNumericalCode) {
  const std::string dir = small_data("singular");
  Matrix sketch = load_feature_matrix(dir + "/sketch.zsfv");
  for (std::size_t r = 0; r < sketch.rows(); ++r) sketch(r, 1) = sketch(r, 0);
  save_feature_matrix(dir + "/sketch.zsfv", sketch);
  const auto r = run_cli({"train", "--data", dir, "--model", "regression", "--seed", "1", "--out", dir + "/m.zsck"});
  EXPECT_EQ(r.code, 2) << r.err;
}

TEST(CliRetrieve, DeterministicAndFullRankingWhenCutoffExceedsDb) {
  const std::string dir = small_data("retrieve");
  ASSERT_EQ(run_cli({"train", "--data", dir, "--model", "cvae", "--seed", "1", "--epochs", "2", "--hidden", "8",
                     "--latent-dim", "3", "--out", dir + "/m.zsck"})
                .code,
            0);
  std::vector<std::vector<std::uint8_t>> runs;
  for (int i = 0; i < 2; ++i) {
    const auto r = run_cli({"retrieve", "--data", dir, "--checkpoint", dir + "/m.zsck", "--seed", "4", "--samples",
                            "20", "--cutoff", "500", "--out", dir + "/r1.jsonl"});
    ASSERT_EQ(r.code, 0) << r.err;
    runs.push_back(read_file_bytes(dir + "/r1.jsonl"));
  }
  EXPECT_EQ(runs[0], runs[1]);
  std::ifstream in(dir + "/r1.jsonl");
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  EXPECT_EQ(nlohmann::json::parse(header).at("config").at("cutoff"), "500");
  EXPECT_EQ(nlohmann::json::parse(first).at("indices").size(), 12u);  // 2 test classes × 6
}

TEST(CliRetrieve, DimensionMismatchIsValidationFailure) {
  const std::string dir = small_data("retrieve_dims");
  ASSERT_EQ(run_cli({"train", "--data", dir, "--model", "sae", "--seed", "1", "--out", dir + "/m.zsck"}).code, 0);
  save_feature_matrix(dir + "/q.zsfv", Matrix(2, 7, 1.0));
  save_labels(dir + "/q.labels", std::vector<std::string>{"x", "y"});
  const auto r = run_cli({"retrieve", "--queries", dir + "/q.zsfv", "--db", dir + "/db.zsfv", "--checkpoint",
                          dir + "/m.zsck", "--seed", "1", "--out", dir + "/r.jsonl"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("features"), std::string::npos) << r.err;
}

TEST(CliEval, ReportAggregatesMatchPerQueryLines) {
  const std::string dir = small_data("eval");
  ASSERT_EQ(run_cli({"train", "--data", dir, "--model", "regression", "--seed", "1", "--ridge", "0.01", "--out",
                     dir + "/m.zsck"})
                .code,
            0);
  const auto r = run_cli({"eval", "--data", dir, "--checkpoint", dir + "/m.zsck", "--seed", "8", "--cutoff", "5",
                          "--out", dir + "/report.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = read_json(dir + "/report.json");
  double p = 0.0, ap = 0.0;
  for (const auto& q : doc.at("queries")) {
    p += q.at("precision_at_k").get<double>();
    ap += q.at("ap_at_k").get<double>();
  }
  const double n = static_cast<double>(doc.at("queries").size());
  EXPECT_EQ(n, 20.0);
  EXPECT_NEAR(doc.at("aggregate").at("mean_precision_at_k").get<double>(), p / n, 1e-12);
  EXPECT_NEAR(doc.at("aggregate").at("map_at_k").get<double>(), ap / n, 1e-12);
  EXPECT_EQ(doc.at("seed").get<std::uint64_t>(), 8u);
  EXPECT_EQ(doc.at("config").at("checkpoint"), dir + "/m.zsck");
  EXPECT_EQ(doc.at("source"), "regression");
}

TEST(CliEval, SameClassDatabaseAndEmptyQueries) {
  const std::string dir = small_data("eval_edge");
  ASSERT_EQ(run_cli({"train", "--data", dir, "--model", "sae", "--seed", "1", "--out", dir + "/m.zsck"}).code, 0);
  const Matrix db = load_feature_matrix(dir + "/db.zsfv");
  save_feature_matrix(dir + "/same.zsfv", db);
  save_labels(dir + "/same.labels", std::vector<std::string>(db.rows(), "only"));
  const Matrix sketches = load_feature_matrix(dir + "/sketch.zsfv");
  save_feature_matrix(dir + "/q.zsfv", Matrix(3, sketches.cols(), 0.5));
  save_labels(dir + "/q.labels", std::vector<std::string>(3, "only"));
  auto r = run_cli({"eval", "--queries", dir + "/q.zsfv", "--db", dir + "/same.zsfv", "--checkpoint", dir + "/m.zsck",
                    "--seed", "1", "--cutoff", "10", "--out", dir + "/same.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_json(dir + "/same.json").at("aggregate").at("mean_precision_at_k").get<double>(), 1.0);

  save_feature_matrix(dir + "/empty.zsfv", Matrix(0, sketches.cols()));
  save_labels(dir + "/empty.labels", std::vector<std::string>{});
  r = run_cli({"eval", "--queries", dir + "/empty.zsfv", "--db", dir + "/same.zsfv", "--checkpoint", dir + "/m.zsck",
               "--seed", "1", "--out", dir + "/empty.json"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("empty query set"), std::string::npos) << r.err;
}

TEST(CliGradcheck, AllRowsPass) {
  const auto r = run_cli({"gradcheck"});
  EXPECT_EQ(r.code, 0) << r.out;
  for (const auto& name : gradcheck_names()) {
    EXPECT_NE(r.out.find(name), std::string::npos) << name;
  }
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST(CliGradcheck, CorruptedGradientIsReportedByName) {
  const auto r = run_cli({"gradcheck", "--corrupt", "caae_discriminator"});
  EXPECT_EQ(r.code, 1);
  std::istringstream lines(r.out);
  std::string line;
  bool found = false;
  while (std::getline(lines, line)) {
    if (line.rfind("caae_discriminator", 0) == 0) {
      found = true;
      EXPECT_NE(line.find("FAIL"), std::string::npos) << line;
    } else if (line.rfind("triplet", 0) == 0) {
      EXPECT_NE(line.find("PASS"), std::string::npos) << line;
    }
  }
  EXPECT_TRUE(found);
}

TEST(CliBinary, ExitCodes) {
  const std::string bin = ZSSBIR_CLI_PATH;
  EXPECT_EQ(exit_status(bin + " --help > /dev/null"), 0);
  EXPECT_EQ(exit_status(bin + " > /dev/null 2>&1"), 1);
  EXPECT_EQ(exit_status(bin + " gradcheck > /dev/null"), 0);
  EXPECT_EQ(exit_status(bin + " gradcheck --corrupt sae_stationarity > /dev/null"), 1);
}
