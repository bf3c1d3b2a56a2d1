#include "cfair/curves.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "io_util.hpp"

namespace cfair {

ScoreSet ScoreSet::make(std::vector<double> values, ScoreKind kind,
                        std::optional<std::uint32_t> attribute) {
  for (double v : values) {
    if (!std::isfinite(v) || v < -1.0 || v > 1.0)
      throw ValidationError("score outside [-1, 1]: " + std::to_string(v));
  }
  std::sort(values.begin(), values.end());
  ScoreSet set;
  set.values = std::move(values);
  set.kind = kind;
  set.attribute = attribute;
  return set;
}

double cosine_score(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    throw ValidationError("cosine_score: dimension mismatch");
  double uu = 0.0, vv = 0.0, uv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uu += u[i] * u[i];
    vv += v[i] * v[i];
    uv += u[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0)
    throw NumericError("cosine_score: zero vector");
  return std::clamp(uv / std::sqrt(uu * vv), -1.0, 1.0);
}

std::pair<ScoreSet, ScoreSet> enumerate_pair_scores(
    const EmbeddingDataset& ds, std::optional<std::uint32_t> attribute) {
  std::vector<std::uint32_t> scope;
  if (attribute) {
    if (*attribute >= ds.attribute_count())
      throw ValidationError("enumerate_pair_scores: attribute id out of range");
    for (std::uint32_t i = 0; i < ds.n; ++i) {
      if (ds.attribute_of_image(i) == *attribute) scope.push_back(i);
    }
    if (scope.empty())
      throw ValidationError("enumerate_pair_scores: no images with attribute " +
                            std::to_string(*attribute));
  } else {
    scope.resize(ds.n);
    for (std::uint32_t i = 0; i < ds.n; ++i) scope[i] = i;
  }

  // Normalize once; pairwise scores are then plain dot products.
  std::vector<double> unit(scope.size() * ds.d);
  for (std::size_t s = 0; s < scope.size(); ++s) {
    const auto e = ds.embedding(scope[s]);
    const double sq = squared_norm(e);
    if (sq == 0.0)
      throw NumericError("enumerate_pair_scores: zero embedding at row " +
                         std::to_string(scope[s]));
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t j = 0; j < ds.d; ++j) unit[s * ds.d + j] = e[j] * inv;
  }

  std::vector<double> genuine, impostor;
  for (std::size_t a = 0; a < scope.size(); ++a) {
    const std::span<const double> ua{unit.data() + a * ds.d, ds.d};
    for (std::size_t b = a + 1; b < scope.size(); ++b) {
      const std::span<const double> ub{unit.data() + b * ds.d, ds.d};
      const double score = std::clamp(dot(ua, ub), -1.0, 1.0);
      if (ds.identity_of[scope[a]] == ds.identity_of[scope[b]]) {
        genuine.push_back(score);
      } else {
        impostor.push_back(score);
      }
    }
  }
  return {ScoreSet::make(std::move(genuine), ScoreKind::genuine, attribute),
          ScoreSet::make(std::move(impostor), ScoreKind::impostor, attribute)};
}

StepCurve::StepCurve(ScoreSet scores, CurveOrientation orientation)
    : scores_(std::move(scores)), orientation_(orientation) {
  if (scores_.values.empty())
    throw ValidationError("StepCurve: empty score set");
  if (!std::is_sorted(scores_.values.begin(), scores_.values.end()))
    throw ValidationError("StepCurve: scores not sorted");
}

std::size_t StepCurve::count_leq(double t) const {
  return static_cast<std::size_t>(
      std::upper_bound(scores_.values.begin(), scores_.values.end(), t) -
      scores_.values.begin());
}

std::size_t StepCurve::count_geq(double t) const {
  return scores_.values.size() -
         static_cast<std::size_t>(
             std::lower_bound(scores_.values.begin(), scores_.values.end(), t) -
             scores_.values.begin());
}

double StepCurve::eval(double t) const {
  const std::size_t m = scores_.values.size();
  const std::size_t leq = count_leq(t);
  const std::size_t count = orientation_ == CurveOrientation::frr_type ? leq : m - leq;
  return static_cast<double>(count) / static_cast<double>(m);
}

std::size_t quantile_rank(std::size_t m, double level) {
  if (!(level > 0.0) || level > 1.0)
    throw ValidationError("quantile level outside (0, 1]: " + std::to_string(level));
  const double md = static_cast<double>(m);
  auto attained = [md](std::size_t j) { return static_cast<double>(j) / md; };
  std::size_t j = static_cast<std::size_t>(
      std::clamp(std::ceil(level * md), 1.0, md));
  // ceil() can land one step off when level*m rounds across an integer;
  // enforce the definition (smallest j with j/m >= level) by local adjustment.
  while (j > 1 && attained(j - 1) >= level) --j;
  while (j < m && attained(j) < level) ++j;
  return j;
}

double frr_inverse(const StepCurve& curve, double alpha) {
  if (curve.orientation() != CurveOrientation::frr_type)
    throw ValidationError("frr_inverse: curve is not FRR-type");
  if (!(alpha > 0.0) || alpha > 1.0)
    throw ValidationError("frr_inverse: alpha outside (0, 1]");
  return curve.scores()[quantile_rank(curve.size(), alpha) - 1];
}

double far_inverse(const StepCurve& curve, double alpha) {
  if (curve.orientation() != CurveOrientation::far_type)
    throw ValidationError("far_inverse: curve is not FAR-type");
  if (!(alpha >= 0.0) || alpha >= 1.0)
    throw ValidationError("far_inverse: alpha outside [0, 1)");
  return curve.scores()[quantile_rank(curve.size(), 1.0 - alpha) - 1];
}

double roc_point(const StepCurve& genuine_frr, const StepCurve& impostor_far,
                 double alpha) {
  return genuine_frr.eval(far_inverse(impostor_far, alpha));
}

BiasReport bias_metrics(const std::vector<StepCurve>& per_group_far,
                        const std::vector<StepCurve>& per_group_frr,
                        const StepCurve& global_impostor, double alpha) {
  if (per_group_far.empty() || per_group_far.size() != per_group_frr.size())
    throw ValidationError("bias_metrics: group curve lists empty or mismatched");

  BiasReport report;
  report.alpha = alpha;
  report.threshold = far_inverse(global_impostor, alpha);

  double log_far_sum = 0.0, log_frr_sum = 0.0;
  double max_far = 0.0, max_frr = 0.0;
  for (std::size_t a = 0; a < per_group_far.size(); ++a) {
    const double far_a = per_group_far[a].eval(report.threshold);
    const double frr_a = per_group_frr[a].eval(report.threshold);
    if (far_a <= 0.0 || frr_a <= 0.0) {
      std::ostringstream msg;
      msg << "metric undefined at level " << alpha << " for group " << a
          << (far_a <= 0.0 ? " (FAR is zero at threshold)" : " (FRR is zero at threshold)");
      throw ValidationError(msg.str());
    }
    report.group_far.push_back(far_a);
    report.group_frr.push_back(frr_a);
    log_far_sum += std::log(far_a);
    log_frr_sum += std::log(frr_a);
    max_far = std::max(max_far, far_a);
    max_frr = std::max(max_frr, frr_a);
  }
  const double groups = static_cast<double>(per_group_far.size());
  report.bfar = max_far / std::exp(log_far_sum / groups);
  report.bfrr = max_frr / std::exp(log_frr_sum / groups);
  return report;
}

void write_curve_csv(const StepCurve& curve, const std::filesystem::path& file) {
  std::ostringstream out;
  out << "threshold,level\n";
  out.precision(17);
  const auto& scores = curve.scores();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i + 1 < scores.size() && scores[i + 1] == scores[i]) continue;  // distinct only
    out << scores[i] << ',' << curve.eval(scores[i]) << '\n';
  }
  io::write_text_atomic(file, out.str());
}

}  // namespace cfair
