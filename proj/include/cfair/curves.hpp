#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "cfair/dataset.hpp"

namespace cfair {

enum class ScoreKind : std::uint8_t { genuine = 0, impostor = 1 };

/// A sorted population of similarity scores in [-1, 1].
struct ScoreSet {
  std::vector<double> values;  // ascending
  ScoreKind kind = ScoreKind::genuine;
  std::optional<std::uint32_t> attribute;

  static ScoreSet make(std::vector<double> values, ScoreKind kind,
                       std::optional<std::uint32_t> attribute = std::nullopt);

  std::size_t size() const { return values.size(); }
};

/// Cosine similarity, clamped to [-1, 1] to guard rounding overshoot.
/// Throws NumericError on a zero vector.
double cosine_score(std::span<const double> u, std::span<const double> v);

/// All C(M,2) pairwise scores over the in-scope images, split into genuine
/// (same identity) and impostor populations. With an attribute scope, only
/// images whose identity carries that attribute participate, so cross-attribute
/// pairs never appear.
std::pair<ScoreSet, ScoreSet> enumerate_pair_scores(
    const EmbeddingDataset& ds, std::optional<std::uint32_t> attribute = std::nullopt);

enum class CurveOrientation : std::uint8_t {
  frr_type,  // t -> #{s <= t} / m, nondecreasing cdf
  far_type,  // t -> #{s >  t} / m, nonincreasing
};

/// An empirical step curve over a score population. Evaluation is exact
/// counting (ties resolved by the inequality direction, no interpolation);
/// every value is a multiple of 1/m.
class StepCurve {
 public:
  StepCurve(ScoreSet scores, CurveOrientation orientation);

  double eval(double t) const;

  /// #{s <= t}; the FRR-type count and the complement cdf of the FAR type.
  std::size_t count_leq(double t) const;
  /// #{s >= t}; the left limit of the FAR-type count at t.
  std::size_t count_geq(double t) const;

  std::size_t size() const { return scores_.size(); }
  CurveOrientation orientation() const { return orientation_; }
  const std::vector<double>& scores() const { return scores_.values; }
  ScoreKind kind() const { return scores_.kind; }
  std::optional<std::uint32_t> attribute() const { return scores_.attribute; }

 private:
  ScoreSet scores_;
  CurveOrientation orientation_;
};

/// Smallest index j in [1, m] with j/m >= level, i.e. the generalized-inverse
/// rank of a cdf made of steps of height 1/m. level must lie in (0, 1].
std::size_t quantile_rank(std::size_t m, double level);

/// Generalized inverse of an FRR-type curve: inf{t : FRR(t) >= alpha},
/// the ceil(alpha*m)-th smallest score. alpha in (0, 1].
double frr_inverse(const StepCurve& curve, double alpha);

/// Generalized inverse of a FAR-type curve through the complement cdf
/// TRR = 1 - FAR: returns TRR^-1(1 - alpha). alpha in [0, 1); alpha -> 0
/// yields the maximum score.
double far_inverse(const StepCurve& curve, double alpha);

/// ROC(alpha) = FRR(FAR^-1(alpha)).
double roc_point(const StepCurve& genuine_frr, const StepCurve& impostor_far,
                 double alpha);

struct BiasReport {
  double alpha = 0.0;
  double threshold = 0.0;      // far_inverse of the global impostor curve
  double bfar = 0.0;           // max_a FAR_a(t) / geomean_a FAR_a(t), >= 1
  double bfrr = 0.0;
  std::vector<double> group_far;  // FAR_a(t), indexed by attribute
  std::vector<double> group_frr;
};

/// Group-to-reference error disparity at the operating threshold implied by
/// the *global* impostor population at FAR level alpha. Throws ValidationError
/// ("metric undefined at level ... for group ...") when any group's FAR or FRR
/// vanishes at that threshold, since the geometric mean collapses to zero.
BiasReport bias_metrics(const std::vector<StepCurve>& per_group_far,
                        const std::vector<StepCurve>& per_group_frr,
                        const StepCurve& global_impostor, double alpha);

/// CSV export with columns (threshold, level), one row per distinct score.
void write_curve_csv(const StepCurve& curve, const std::filesystem::path& file);

}  // namespace cfair
