#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cfair/centroids.hpp"
#include "cfair/curves.hpp"
#include "cfair/dataset.hpp"

namespace cfair {

/// Quantile map sending a group-a genuine pseudo-score to the score at the
/// same FRR level on the reference curve: FRR_r^-1(FRR_a[s]). For a == r with
/// distinct scores this is the identity; it is nondecreasing in s and always
/// returns an observed score of the reference group.
double t_frr(double s, const StepCurve& genuine_a, const StepCurve& genuine_r);

/// Impostor counterpart, inverted through the complement cdf TRR = 1 - FAR:
/// an observed score with k of m group-a impostor scores <= s maps to the
/// reference score of rank ceil(k * m_r / m). Evaluating the level through
/// the inclusive <= count (rather than the strict > count of the FAR curve)
/// keeps the map total at the distribution's edge: the maximal score of a
/// maps to the maximal score of r, and a == r is again the identity.
double t_far(double s, const StepCurve& impostor_a, const StepCurve& impostor_r);

/// The transform applied to group a's whole score population: member j of the
/// sorted population maps to the reference score of rank ceil(j * m_r / m_a).
/// Equals mapping every score through t_frr/t_far whenever the scores are
/// distinct. Tied scores (identities with exactly two images always tie their
/// two genuine pseudo-scores) are spread across their rank range instead of
/// collapsing onto the top of the block; this is the population the alignment
/// bound of check_alignment is a theorem for.
std::vector<double> transform_population(const StepCurve& curve_a,
                                         const StepCurve& curve_r);

struct TargetEntry {
  std::uint32_t image = 0;
  std::uint32_t identity = 0;
  ScoreKind kind = ScoreKind::genuine;
  double source = 0.0;  // pre-trained pseudo-score
  double target = 0.0;  // transformed score, the fixed regression target
  double level = 0.0;   // inclusive metric level of source within its group
};

/// Fixed regression targets for every same-attribute image-centroid pair,
/// fully determined by the pre-trained embeddings and immutable once built.
/// Entries are ordered by (image, identity); `level` is the group-wise FRR
/// (genuine) or inclusive FAR (impostor) of the source score, in [1/m, 1].
struct TargetTable {
  std::uint32_t reference_attribute = 0;
  std::vector<TargetEntry> entries;
  std::vector<std::size_t> image_offsets;     // n+1; entries of image i in [o[i], o[i+1])
  std::vector<std::uint64_t> genuine_count;   // |genuine pairs| per attribute
  std::vector<std::uint64_t> impostor_count;  // |impostor pairs| per attribute

  std::size_t size() const { return entries.size(); }
};

/// Builds the full table against reference attribute r. Requires every group
/// to have at least two identities (so both pair populations are nonempty).
TargetTable build_target_table(const EmbeddingDataset& ds, const CentroidSet& cs,
                               std::uint32_t reference_attribute);

/// Sup-norm gap between the step curve rebuilt from transformed group-a scores
/// and the reference curve, evaluated exactly over the union of both curves'
/// jump points (step functions attain their sup there). For the output of
/// transform_population the gap is at most 1/m_a, for every dataset.
double check_alignment(const std::vector<double>& transformed_scores,
                       const StepCurve& curve_r, CurveOrientation kind);

/// targets.bin: packed little-endian records (image u32, identity u32, kind u8,
/// source f64, target f64, level f64); targets.json: reference attribute and
/// per-group pair counts.
void save_target_table(const TargetTable& table, const std::filesystem::path& dir);
TargetTable load_target_table(const std::filesystem::path& dir);

}  // namespace cfair
