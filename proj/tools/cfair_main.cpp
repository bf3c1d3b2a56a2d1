// cfair: fairness post-processing for precomputed verification embeddings.
//
// Subcommands cover the whole pipeline: synth (biased synthetic data),
// centroids, targets, train, eval, check-alignment. Exit codes: 0 success,
// 1 usage, 2 validation, 3 numerical failure.

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cfair/pipeline.hpp"

namespace {

cfair::SynthConfig parse_groups_flag(std::size_t d, std::uint64_t seed,
                                     const std::string& groups_flag) {
  cfair::SynthConfig cfg;
  cfg.d = d;
  cfg.seed = seed;
  std::istringstream list(groups_flag);
  std::string item;
  while (std::getline(list, item, ',')) {
    std::istringstream fields(item);
    cfair::SynthGroup group;
    std::string identities, images, sigma;
    if (!std::getline(fields, group.name, ':') || !std::getline(fields, identities, ':') ||
        !std::getline(fields, images, ':') || !std::getline(fields, sigma))
      throw cfair::ValidationError("bad group spec '" + item +
                                   "' (expected name:identities:images:sigma)");
    try {
      group.identities = std::stoul(identities);
      group.images_per_identity = std::stoul(images);
      group.noise_sigma = std::stod(sigma);
    } catch (const std::exception&) {
      throw cfair::ValidationError("bad group spec '" + item + "': numeric field invalid");
    }
    cfg.groups.push_back(std::move(group));
  }
  if (cfg.groups.empty())
    throw cfair::ValidationError("--groups: no groups given");
  return cfg;
}

std::vector<double> parse_alphas(const std::string& alphas_flag) {
  std::vector<double> alphas;
  std::istringstream list(alphas_flag);
  std::string item;
  while (std::getline(list, item, ',')) {
    try {
      alphas.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw cfair::ValidationError("bad alpha '" + item + "'");
    }
    if (!(alphas.back() > 0.0) || alphas.back() >= 1.0)
      throw cfair::ValidationError("alpha must lie in (0, 1): " + item);
  }
  if (alphas.empty()) throw cfair::ValidationError("--alphas: no levels given");
  return alphas;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fairness post-processing toolkit for embedding models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cfair::kVersion));

  // synth
  auto* synth = app.add_subcommand("synth", "generate a biased synthetic dataset");
  std::string synth_out, synth_groups = "A:50:10:0.3,B:50:10:0.8";
  std::size_t synth_dim = 64;
  std::uint64_t synth_seed = 0;
  synth->add_option("--out", synth_out, "output dataset directory")->required();
  synth->add_option("--dim", synth_dim, "embedding dimension");
  synth->add_option("--groups", synth_groups, "name:identities:images:sigma[,...]");
  synth->add_option("--seed", synth_seed, "generator seed");

  // centroids
  auto* centroids = app.add_subcommand("centroids", "estimate per-identity centroids");
  std::string cent_data, cent_out;
  centroids->add_option("--data", cent_data, "dataset directory")->required();
  centroids->add_option("--out", cent_out, "output directory")->required();

  // targets
  auto* targets = app.add_subcommand("targets", "build regression target and weight tables");
  std::string targ_data, targ_centroids, targ_reference, targ_out;
  targets->add_option("--data", targ_data, "dataset directory")->required();
  targets->add_option("--centroids", targ_centroids, "centroid directory")->required();
  targets->add_option("--reference", targ_reference, "reference attribute name")->required();
  targets->add_option("--out", targ_out, "output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "train the fairness module");
  std::string train_data, train_centroids, train_targets, train_out;
  std::size_t train_batch = 4096, train_epochs = 20, train_ckpt_every = 0;
  double train_lr = 1e-3;
  std::uint64_t train_seed = 0;
  train->add_option("--data", train_data, "dataset directory")->required();
  train->add_option("--centroids", train_centroids, "centroid directory")->required();
  train->add_option("--targets", train_targets, "target table directory")->required();
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--batch", train_batch, "batch size");
  train->add_option("--lr", train_lr, "learning rate");
  train->add_option("--epochs", train_epochs, "training epochs");
  train->add_option("--seed", train_seed, "sampler seed");
  train->add_option("--checkpoint-every", train_ckpt_every,
                    "write an intermediate checkpoint every M epochs (0 = final only)");

  // eval
  auto* eval = app.add_subcommand("eval", "fairness report from real pair scores");
  std::string eval_data, eval_checkpoint, eval_alphas = "1e-1,1e-2", eval_out;
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--checkpoint", eval_checkpoint,
                   "checkpoint directory (absent = evaluate raw embeddings)");
  eval->add_option("--alphas", eval_alphas, "comma-separated FAR levels");
  eval->add_option("--out", eval_out, "output directory")->required();

  // check-alignment
  auto* align = app.add_subcommand("check-alignment",
                                   "verify the transform aligns every group onto the reference");
  std::string align_data, align_centroids, align_reference;
  align->add_option("--data", align_data, "dataset directory")->required();
  align->add_option("--centroids", align_centroids, "centroid directory")->required();
  align->add_option("--reference", align_reference, "reference attribute name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // any usage problem is exit 1
  }

  try {
    if (synth->parsed()) {
      cfair::SynthOptions opt;
      opt.out = synth_out;
      opt.config = parse_groups_flag(synth_dim, synth_seed, synth_groups);
      cfair::run_synth(opt);
      std::cout << "dataset written to " << synth_out << '\n';
    } else if (centroids->parsed()) {
      cfair::run_centroids({cent_data, cent_out});
      std::cout << "centroids written to " << cent_out << '\n';
    } else if (targets->parsed()) {
      cfair::run_targets({targ_data, targ_centroids, targ_reference, targ_out});
      std::cout << "target table written to " << targ_out << '\n';
    } else if (train->parsed()) {
      cfair::TrainOptions opt;
      opt.data = train_data;
      opt.centroids = train_centroids;
      opt.targets = train_targets;
      opt.out = train_out;
      opt.batch_size = train_batch;
      opt.learning_rate = train_lr;
      opt.epochs = train_epochs;
      opt.seed = train_seed;
      opt.checkpoint_every = train_ckpt_every;
      cfair::run_train(opt);
      std::cout << "checkpoint written to " << train_out << '\n';
    } else if (eval->parsed()) {
      cfair::EvalOptions opt;
      opt.data = eval_data;
      if (!eval_checkpoint.empty()) opt.checkpoint = eval_checkpoint;
      opt.alphas = parse_alphas(eval_alphas);
      opt.out = eval_out;
      const cfair::EvalSummary summary = cfair::run_eval(opt);
      for (const cfair::EvalEntry& entry : summary.entries) {
        std::cout << "alpha " << entry.alpha << ": ";
        if (!entry.defined) {
          std::cout << entry.error << '\n';
          continue;
        }
        std::cout << "threshold " << entry.threshold << "  roc " << entry.roc << "  bfar "
                  << entry.bfar << "  bfrr " << entry.bfrr << '\n';
      }
      std::cout << "report written to " << eval_out << '\n';
    } else if (align->parsed()) {
      const auto reports =
          cfair::run_check_alignment({align_data, align_centroids, align_reference});
      bool all_pass = true;
      for (const cfair::AlignmentGroupReport& report : reports) {
        std::cout << (report.pass ? "PASS" : "FAIL") << " group " << report.name
                  << ": frr gap " << report.frr_gap << " (bound " << report.frr_bound
                  << "), far gap " << report.far_gap << " (bound " << report.far_bound
                  << ")\n";
        all_pass = all_pass && report.pass;
      }
      if (!all_pass) return 3;
    }
  } catch (const cfair::ValidationError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const cfair::NumericError& err) {
    std::cerr << "numerical error: " << err.what() << '\n';
    return 3;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  }
  return 0;
}
