#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cfair/cftrain.hpp"
#include "cfair/synth.hpp"

namespace cfair {

/// Orchestration behind the CLI subcommands. Each run_* function is the whole
/// subcommand: it performs the library calls, writes the output artifacts and
/// a run manifest, and returns what the CLI prints. Keeping these out of
/// main() lets tests drive the exact same code paths.

struct SynthOptions {
  std::filesystem::path out;
  SynthConfig config;
};

struct CentroidsOptions {
  std::filesystem::path data;
  std::filesystem::path out;
};

struct TargetsOptions {
  std::filesystem::path data;
  std::filesystem::path centroids;
  std::string reference_name;
  std::filesystem::path out;
};

struct TrainOptions {
  std::filesystem::path data;
  std::filesystem::path centroids;
  std::filesystem::path targets;
  std::filesystem::path out;
  std::size_t batch_size = 4096;
  double learning_rate = 1e-3;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0 = final checkpoint only
};

struct EvalOptions {
  std::filesystem::path data;
  std::optional<std::filesystem::path> checkpoint;  // absent = raw embeddings
  std::vector<double> alphas;
  std::filesystem::path out;
};

struct AlignmentOptions {
  std::filesystem::path data;
  std::filesystem::path centroids;
  std::string reference_name;
};

void run_synth(const SynthOptions& opt);
void run_centroids(const CentroidsOptions& opt);
void run_targets(const TargetsOptions& opt);
void run_train(const TrainOptions& opt);

struct EvalEntry {
  double alpha = 0.0;
  bool defined = false;       // false when a group's rate vanished at threshold
  std::string error;          // set when !defined
  double threshold = 0.0;
  double roc = 0.0;
  double bfar = 0.0;
  double bfrr = 0.0;
  std::vector<double> group_far;
  std::vector<double> group_frr;
  bool below_resolution = false;  // alpha < 1/|impostor pairs|
};

struct EvalSummary {
  std::vector<EvalEntry> entries;
  std::vector<std::string> attribute_names;
};

/// Real-pair fairness report: global ROC plus BFAR/BFRR per alpha, group
/// curves exported as CSV. With a checkpoint, embeddings go through the
/// trained module first.
EvalSummary run_eval(const EvalOptions& opt);

struct AlignmentGroupReport {
  std::uint32_t attribute = 0;
  std::string name;
  double frr_gap = 0.0;
  double frr_bound = 0.0;  // 1/|genuine pairs|
  double far_gap = 0.0;
  double far_bound = 0.0;  // 1/|impostor pairs|
  bool pass = false;
};

/// Transforms every group's pseudo-scores onto the reference and reports the
/// exact sup-gap against the bound 1/m_a per side.
std::vector<AlignmentGroupReport> run_check_alignment(const AlignmentOptions& opt);

/// The attribute id for a name, or a ValidationError listing the known names.
std::uint32_t resolve_attribute_name(const EmbeddingDataset& ds, const std::string& name);

/// Writes `run_manifest.json` atomically in `out_dir`, recording the
/// subcommand, resolved flag values, involved paths, seed and wallclock.
void write_run_manifest(const std::filesystem::path& out_dir,
                        const std::string& subcommand,
                        const std::vector<std::pair<std::string, std::string>>& fields,
                        double wallclock_seconds);

}  // namespace cfair
