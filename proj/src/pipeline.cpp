#include "cfair/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <sstream>

#include "io_util.hpp"

namespace cfair {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(clock::now() - start_).count();
  }

 private:
  using clock = std::chrono::steady_clock;
  clock::time_point start_ = clock::now();
};

std::string sanitize(const std::string& name) {
  std::string out;
  for (const char c : name) {
    out += (std::isalnum(static_cast<unsigned char>(c)) != 0) ? c : '_';
  }
  return out.empty() ? std::string("group") : out;
}

json double_or_null(double v) {
  return std::isfinite(v) ? json(v) : json(nullptr);
}

}  // namespace

std::uint32_t resolve_attribute_name(const EmbeddingDataset& ds, const std::string& name) {
  for (std::uint32_t a = 0; a < ds.attribute_names.size(); ++a) {
    if (ds.attribute_names[a] == name) return a;
  }
  std::string known;
  for (const std::string& n : ds.attribute_names) {
    if (!known.empty()) known += ", ";
    known += n;
  }
  throw ValidationError("unknown attribute '" + name + "'; known attributes: " + known);
}

void write_run_manifest(const fs::path& out_dir, const std::string& subcommand,
                        const std::vector<std::pair<std::string, std::string>>& fields,
                        double wallclock_seconds) {
  json manifest;
  manifest["subcommand"] = subcommand;
  manifest["version"] = kVersion;
  manifest["wallclock_seconds"] = wallclock_seconds;
  json config = json::object();
  for (const auto& [key, value] : fields) config[key] = value;
  manifest["config"] = std::move(config);
  // CF_THREADS caps internal parallelism. Every code path is currently
  // single-threaded (bit-reproducibility first), so the cap is recorded only.
  if (const char* threads = std::getenv("CF_THREADS")) {
    manifest["cf_threads"] = threads;
  }
  io::write_json_atomic(out_dir / "run_manifest.json", manifest);
}

void run_synth(const SynthOptions& opt) {
  Stopwatch timer;
  const EmbeddingDataset ds = generate(opt.config);
  save_dataset(ds, opt.out);

  json provenance;
  provenance["d"] = opt.config.d;
  provenance["seed"] = opt.config.seed;
  json groups = json::array();
  for (const SynthGroup& g : opt.config.groups) {
    groups.push_back({{"name", g.name},
                      {"identities", g.identities},
                      {"images_per_identity", g.images_per_identity},
                      {"noise_sigma", g.noise_sigma}});
  }
  provenance["groups"] = std::move(groups);
  io::write_json_atomic(opt.out / "synth.json", provenance);

  std::ostringstream groups_flag;
  for (std::size_t i = 0; i < opt.config.groups.size(); ++i) {
    const SynthGroup& g = opt.config.groups[i];
    if (i) groups_flag << ',';
    groups_flag << g.name << ':' << g.identities << ':' << g.images_per_identity << ':'
                << g.noise_sigma;
  }
  write_run_manifest(opt.out, "synth",
                     {{"out", opt.out.string()},
                      {"dim", std::to_string(opt.config.d)},
                      {"groups", groups_flag.str()},
                      {"seed", std::to_string(opt.config.seed)}},
                     timer.seconds());
}

void run_centroids(const CentroidsOptions& opt) {
  Stopwatch timer;
  const EmbeddingDataset ds = load_dataset(opt.data);
  const CentroidSet cs = estimate_centroids(ds);
  save_centroids(cs, opt.out);
  write_run_manifest(opt.out, "centroids",
                     {{"data", opt.data.string()}, {"out", opt.out.string()}},
                     timer.seconds());
}

void run_targets(const TargetsOptions& opt) {
  Stopwatch timer;
  const EmbeddingDataset ds = load_dataset(opt.data);
  const CentroidSet cs = load_centroids(opt.centroids);
  if (cs.k != ds.k || cs.d != ds.d)
    throw ValidationError("targets: centroid file does not match the dataset shape");
  const std::uint32_t reference = resolve_attribute_name(ds, opt.reference_name);
  const TargetTable table = build_target_table(ds, cs, reference);
  save_target_table(table, opt.out);
  write_run_manifest(opt.out, "targets",
                     {{"data", opt.data.string()},
                      {"centroids", opt.centroids.string()},
                      {"reference", opt.reference_name},
                      {"out", opt.out.string()}},
                     timer.seconds());
}

void run_train(const TrainOptions& opt) {
  Stopwatch timer;
  const EmbeddingDataset ds = load_dataset(opt.data);
  const CentroidSet cs = load_centroids(opt.centroids);
  if (cs.k != ds.k || cs.d != ds.d)
    throw ValidationError("train: centroid file does not match the dataset shape");
  const TargetTable targets = load_target_table(opt.targets);
  const WeightTable weights = weights_from_table(targets, ds);

  TrainConfig cfg;
  cfg.batch_size = opt.batch_size;
  cfg.learning_rate = opt.learning_rate;
  cfg.epochs = opt.epochs;
  cfg.reference_attribute = targets.reference_attribute;
  cfg.seed = opt.seed;

  fs::create_directories(opt.out);
  std::ostringstream log;
  log << "epoch,mean_loss,wallclock_seconds\n";
  log.precision(17);

  const TrainResult result = train(
      ds, cs, targets, weights, cfg,
      [&](std::size_t epoch, double mean_loss, const ModuleParams& params) {
        log << epoch << ',' << mean_loss << ',' << timer.seconds() << '\n';
        if (opt.checkpoint_every > 0 && (epoch + 1) % opt.checkpoint_every == 0 &&
            epoch + 1 < cfg.epochs) {
          save_checkpoint(params, epoch + 1, mean_loss,
                          opt.out / ("epoch_" + std::to_string(epoch + 1)));
        }
      });

  save_checkpoint(result.params, cfg.epochs, result.epoch_mean_loss.back(), opt.out);
  io::write_text_atomic(opt.out / "train_log.csv", log.str());
  write_run_manifest(opt.out, "train",
                     {{"data", opt.data.string()},
                      {"centroids", opt.centroids.string()},
                      {"targets", opt.targets.string()},
                      {"out", opt.out.string()},
                      {"batch", std::to_string(opt.batch_size)},
                      {"lr", std::to_string(opt.learning_rate)},
                      {"epochs", std::to_string(opt.epochs)},
                      {"seed", std::to_string(opt.seed)}},
                     timer.seconds());
}

namespace {

EmbeddingDataset transformed_dataset(const EmbeddingDataset& ds, const ModuleParams& p) {
  if (p.d != ds.d)
    throw ValidationError("eval: checkpoint dimension does not match the dataset");
  EmbeddingDataset out = ds;
  ForwardTrace trace;
  for (std::size_t i = 0; i < ds.n; ++i) {
    forward_into(p, ds.embedding(i), trace);
    std::copy(trace.output.begin(), trace.output.end(), out.embeddings.begin() + i * ds.d);
  }
  return out;
}

}  // namespace

EvalSummary run_eval(const EvalOptions& opt) {
  Stopwatch timer;
  EmbeddingDataset ds = load_dataset(opt.data);
  if (opt.checkpoint) {
    const Checkpoint ckpt = load_checkpoint(*opt.checkpoint);
    ds = transformed_dataset(ds, ckpt.params);
  }

  const auto [global_genuine, global_impostor] = enumerate_pair_scores(ds);
  const StepCurve global_frr(global_genuine, CurveOrientation::frr_type);
  const StepCurve global_far(global_impostor, CurveOrientation::far_type);

  const std::size_t attributes = ds.attribute_count();
  std::vector<StepCurve> group_far, group_frr;
  for (std::uint32_t a = 0; a < attributes; ++a) {
    auto [genuine, impostor] = enumerate_pair_scores(ds, a);
    if (genuine.size() == 0)
      throw ValidationError("eval: group '" + ds.attribute_names[a] +
                            "' has no genuine pairs");
    if (impostor.size() == 0)
      throw ValidationError("eval: group '" + ds.attribute_names[a] +
                            "' has no impostor pairs");
    group_frr.emplace_back(std::move(genuine), CurveOrientation::frr_type);
    group_far.emplace_back(std::move(impostor), CurveOrientation::far_type);
  }

  EvalSummary summary;
  summary.attribute_names = ds.attribute_names;
  const double resolution = 1.0 / static_cast<double>(global_far.size());
  for (const double alpha : opt.alphas) {
    EvalEntry entry;
    entry.alpha = alpha;
    entry.below_resolution = alpha < resolution;
    if (entry.below_resolution) {
      std::cerr << "warning: alpha " << alpha << " is below the resolution 1/|impostors| = "
                << resolution << "; levels this small are not attained\n";
    }
    try {
      const BiasReport report = bias_metrics(group_far, group_frr, global_far, alpha);
      entry.defined = true;
      entry.threshold = report.threshold;
      entry.roc = roc_point(global_frr, global_far, alpha);
      entry.bfar = report.bfar;
      entry.bfrr = report.bfrr;
      entry.group_far = report.group_far;
      entry.group_frr = report.group_frr;
    } catch (const ValidationError& err) {
      entry.error = err.what();
      std::cerr << "warning: " << err.what() << '\n';
    }
    summary.entries.push_back(std::move(entry));
  }

  fs::create_directories(opt.out);
  write_curve_csv(global_frr, opt.out / "global_frr.csv");
  write_curve_csv(global_far, opt.out / "global_far.csv");
  for (std::uint32_t a = 0; a < attributes; ++a) {
    const std::string name = sanitize(ds.attribute_names[a]);
    write_curve_csv(group_frr[a], opt.out / ("frr_" + name + ".csv"));
    write_curve_csv(group_far[a], opt.out / ("far_" + name + ".csv"));
  }

  json report;
  report["attribute_names"] = ds.attribute_names;
  report["embeddings"] = opt.checkpoint ? "module" : "raw";
  json entries = json::array();
  for (const EvalEntry& entry : summary.entries) {
    json e;
    e["alpha"] = entry.alpha;
    if (entry.below_resolution) e["warning"] = "alpha below 1/|impostor pairs|";
    if (!entry.defined) {
      e["error"] = entry.error;
    } else {
      e["threshold"] = entry.threshold;
      e["roc"] = double_or_null(entry.roc);
      e["bfar"] = double_or_null(entry.bfar);
      e["bfrr"] = double_or_null(entry.bfrr);
      e["per_group"] = {{"far", entry.group_far}, {"frr", entry.group_frr}};
    }
    entries.push_back(std::move(e));
  }
  report["reports"] = std::move(entries);
  io::write_json_atomic(opt.out / "bias_report.json", report);

  std::ostringstream alphas_flag;
  for (std::size_t i = 0; i < opt.alphas.size(); ++i) {
    if (i) alphas_flag << ',';
    alphas_flag << opt.alphas[i];
  }
  write_run_manifest(opt.out, "eval",
                     {{"data", opt.data.string()},
                      {"checkpoint", opt.checkpoint ? opt.checkpoint->string() : ""},
                      {"alphas", alphas_flag.str()},
                      {"out", opt.out.string()}},
                     timer.seconds());
  return summary;
}

std::vector<AlignmentGroupReport> run_check_alignment(const AlignmentOptions& opt) {
  const EmbeddingDataset ds = load_dataset(opt.data);
  const CentroidSet cs = load_centroids(opt.centroids);
  if (cs.k != ds.k || cs.d != ds.d)
    throw ValidationError("check-alignment: centroid file does not match the dataset");
  const std::uint32_t reference = resolve_attribute_name(ds, opt.reference_name);
  const GroupIndex gi = build_group_index(ds);

  std::vector<PseudoCurves> curves;
  for (std::uint32_t a = 0; a < ds.attribute_count(); ++a) {
    curves.push_back(pseudo_metric_curves(ds, cs, gi, a));
  }
  const PseudoCurves& ref = curves[reference];

  std::vector<AlignmentGroupReport> reports;
  for (std::uint32_t a = 0; a < ds.attribute_count(); ++a) {
    AlignmentGroupReport report;
    report.attribute = a;
    report.name = ds.attribute_names[a];
    report.frr_bound = 1.0 / static_cast<double>(curves[a].frr.size());
    report.far_bound = 1.0 / static_cast<double>(curves[a].far.size());

    report.frr_gap = check_alignment(transform_population(curves[a].frr, ref.frr),
                                     ref.frr, CurveOrientation::frr_type);
    report.far_gap = check_alignment(transform_population(curves[a].far, ref.far),
                                     ref.far, CurveOrientation::far_type);

    report.pass = report.frr_gap <= report.frr_bound && report.far_gap <= report.far_bound;
    reports.push_back(std::move(report));
  }
  return reports;
}

}  // namespace cfair
