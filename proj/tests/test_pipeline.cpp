#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <string>

#include <json.hpp>

#include "cfair/pipeline.hpp"
#include "test_support.hpp"

using namespace cfair;
using testsupport::TempDir;
using nlohmann::json;

namespace {

SynthOptions small_synth(const std::filesystem::path& out, std::uint64_t seed = 7) {
  SynthOptions opt;
  opt.out = out;
  opt.config.d = 16;
  opt.config.seed = seed;
  opt.config.groups = {{"ref", 6, 4, 0.3}, {"noisy", 6, 4, 0.8}};
  return opt;
}

int run_cli(const std::string& args) {
  const std::string command = std::string(CFAIR_CLI_BINARY) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("pipeline: synth/centroids/targets/train/eval end to end") {
  TempDir root;
  run_synth(small_synth(root / "data"));
  CHECK(std::filesystem::exists(root / "data" / "embeddings.bin"));
  CHECK(std::filesystem::exists(root / "data" / "synth.json"));
  CHECK(std::filesystem::exists(root / "data" / "run_manifest.json"));

  run_centroids({root / "data", root / "centroids"});
  run_targets({root / "data", root / "centroids", "ref", root / "targets"});

  TrainOptions topt;
  topt.data = root / "data";
  topt.centroids = root / "centroids";
  topt.targets = root / "targets";
  topt.out = root / "model";
  topt.batch_size = 16;
  topt.epochs = 3;
  topt.seed = 9;
  run_train(topt);
  CHECK(std::filesystem::exists(root / "model" / "checkpoint.bin"));
  CHECK(std::filesystem::exists(root / "model" / "train_log.csv"));

  EvalOptions eopt;
  eopt.data = root / "data";
  eopt.checkpoint = root / "model";
  eopt.alphas = {0.1};
  eopt.out = root / "eval";
  const EvalSummary summary = run_eval(eopt);
  REQUIRE(summary.entries.size() == 1);
  CHECK(summary.entries[0].defined);
  CHECK(summary.entries[0].bfar >= 1.0);
  CHECK(summary.entries[0].bfrr >= 1.0);
  CHECK(std::filesystem::exists(root / "eval" / "bias_report.json"));
  CHECK(std::filesystem::exists(root / "eval" / "frr_ref.csv"));
  CHECK(std::filesystem::exists(root / "eval" / "far_noisy.csv"));
}

TEST_CASE("pipeline: centroids subcommand output equals the library call bit-exactly") {
  TempDir root;
  run_synth(small_synth(root / "data"));
  run_centroids({root / "data", root / "centroids"});

  const EmbeddingDataset ds = load_dataset(root / "data");
  const CentroidSet direct = estimate_centroids(ds);
  const CentroidSet from_disk = load_centroids(root / "centroids");
  CHECK(from_disk.centroids == direct.centroids);
  CHECK(from_disk.attribute_of == direct.attribute_of);
}

TEST_CASE("pipeline: unknown reference attribute lists the known names") {
  TempDir root;
  run_synth(small_synth(root / "data"));
  run_centroids({root / "data", root / "centroids"});
  CHECK_THROWS_WITH_AS(
      run_targets({root / "data", root / "centroids", "missing", root / "targets"}),
      doctest::Contains("known attributes: ref, noisy"), ValidationError);
}

TEST_CASE("pipeline: eval marks alphas below the attainable resolution") {
  TempDir root;
  run_synth(small_synth(root / "data"));
  EvalOptions eopt;
  eopt.data = root / "data";
  eopt.alphas = {0.5, 1e-9};
  eopt.out = root / "eval";
  const EvalSummary summary = run_eval(eopt);
  CHECK_FALSE(summary.entries[0].below_resolution);
  CHECK(summary.entries[1].below_resolution);

  const json report = json::parse(std::ifstream(root / "eval" / "bias_report.json"));
  CHECK(!report.at("reports")[0].contains("warning"));
  CHECK(report.at("reports")[1].contains("warning"));
}

TEST_CASE("pipeline: single-group eval reports exactly balanced metrics") {
  TempDir root;
  SynthOptions opt;
  opt.out = root / "data";
  opt.config.d = 8;
  opt.config.seed = 3;
  opt.config.groups = {{"only", 5, 4, 0.5}};
  run_synth(opt);

  EvalOptions eopt;
  eopt.data = root / "data";
  eopt.alphas = {0.2};
  eopt.out = root / "eval";
  const EvalSummary summary = run_eval(eopt);
  CHECK(summary.entries[0].bfar == 1.0);
  CHECK(summary.entries[0].bfrr == 1.0);
}

TEST_CASE("pipeline: alignment check passes and is exact for a single group") {
  TempDir root;
  SynthOptions opt;
  opt.out = root / "data";
  opt.config.d = 8;
  opt.config.seed = 3;
  opt.config.groups = {{"only", 5, 4, 0.5}};
  run_synth(opt);
  run_centroids({root / "data", root / "centroids"});

  const auto reports = run_check_alignment({root / "data", root / "centroids", "only"});
  REQUIRE(reports.size() == 1);
  CHECK(reports[0].pass);
  CHECK(reports[0].frr_gap == 0.0);
  CHECK(reports[0].far_gap == 0.0);
}

TEST_CASE("train options default to batch 4096, lr 1e-3, 20 epochs") {
  const TrainOptions defaults;
  CHECK(defaults.batch_size == 4096);
  CHECK(defaults.learning_rate == 1e-3);
  CHECK(defaults.epochs == 20);
  const TrainConfig cfg;
  CHECK(cfg.batch_size == 4096);
  CHECK(cfg.learning_rate == 1e-3);
  CHECK(cfg.epochs == 20);
}

TEST_CASE("train writes intermediate checkpoints at the configured cadence") {
  TempDir root;
  run_synth(small_synth(root / "data"));
  run_centroids({root / "data", root / "centroids"});
  run_targets({root / "data", root / "centroids", "ref", root / "targets"});

  TrainOptions topt;
  topt.data = root / "data";
  topt.centroids = root / "centroids";
  topt.targets = root / "targets";
  topt.out = root / "model";
  topt.batch_size = 16;
  topt.epochs = 4;
  topt.checkpoint_every = 2;
  run_train(topt);
  CHECK(std::filesystem::exists(root / "model" / "epoch_2" / "checkpoint.bin"));
  CHECK_FALSE(std::filesystem::exists(root / "model" / "epoch_4"));  // final is top-level
  CHECK(std::filesystem::exists(root / "model" / "checkpoint.bin"));
  const Checkpoint final_ckpt = load_checkpoint(root / "model");
  CHECK(final_ckpt.epoch == 4);
}

TEST_CASE("cli: usage errors exit 1, validation errors exit 2") {
  CHECK(run_cli("synth") == 1);                       // missing --out
  CHECK(run_cli("bogus-subcommand") == 1);
  TempDir root;
  CHECK(run_cli("centroids --data " + (root / "missing").string() + " --out " +
                (root / "c").string()) == 2);
}

TEST_CASE("cli: full pipeline via the binary, deterministic synth") {
  TempDir root;
  const std::string data = (root / "data").string();
  const std::string flags =
      " --dim 8 --groups A:4:3:0.3,B:4:3:0.8 --seed 11 --out ";
  REQUIRE(run_cli("synth" + flags + data) == 0);

  // Re-running with the same flags reproduces the dataset bit for bit.
  const std::string data2 = (root / "data2").string();
  REQUIRE(run_cli("synth" + flags + data2) == 0);
  CHECK(testsupport::file_bytes(root / "data" / "embeddings.bin") ==
        testsupport::file_bytes(root / "data2" / "embeddings.bin"));

  const std::string centroids = (root / "centroids").string();
  REQUIRE(run_cli("centroids --data " + data + " --out " + centroids) == 0);
  REQUIRE(run_cli("targets --data " + data + " --centroids " + centroids +
                  " --reference A --out " + (root / "targets").string()) == 0);
  REQUIRE(run_cli("train --data " + data + " --centroids " + centroids + " --targets " +
                  (root / "targets").string() + " --out " + (root / "model").string() +
                  " --batch 8 --epochs 2 --seed 1") == 0);
  REQUIRE(run_cli("eval --data " + data + " --checkpoint " + (root / "model").string() +
                  " --alphas 0.2,0.05 --out " + (root / "eval").string()) == 0);
  CHECK(run_cli("check-alignment --data " + data + " --centroids " + centroids +
                " --reference A") == 0);
  CHECK(run_cli("check-alignment --data " + data + " --centroids " + centroids +
                " --reference Z") == 2);
}
