#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trustlapse/coreset.hpp"

namespace trustlapse {

/// Which latent components feed s_lss. DistOnly / SimOnly are the ablation
/// hooks; Combined is the product of both.
enum class ScoreMode { Combined, DistOnly, SimOnly };

ScoreMode parse_score_mode(const std::string& text);  // "combined" | "dist-only" | "sim-only"
std::string to_string(ScoreMode mode);

struct LatentScore {
  double s_dist_raw = 0.0;
  double s_sim_raw = 0.0;
  double d_norm = 0.0;
  double sim_mistrust = 0.0;
  double s_lss = 0.0;
  double trust = 1.0;
  ClassId nearest_class = 0;
  std::size_t nearest_member_index = 0;
  std::string nearest_member;
  bool zero_vector = false;

  friend bool operator==(const LatentScore&, const LatentScore&) = default;
};

struct DistanceResult {
  double value = 0.0;
  ClassId nearest_class = 0;
};

struct SimilarityResult {
  double value = 0.0;
  std::size_t nearest_index = 0;
  bool zero_vector = false;
};

// min over classes of the ridged Mahalanobis quadratic form; ties go to the
// lowest class id.
DistanceResult mahalanobis_score(const CoresetModel& model, std::span<const double> vec);

// max cosine similarity over coreset members; ties go to the lowest member
// index. A zero query yields similarity 0 with zero_vector set.
SimilarityResult cosine_score(const CoresetModel& model, std::span<const double> vec);

struct NormalizedComponents {
  double d_norm = 0.0;
  double sim_mistrust = 0.0;
};

NormalizedComponents normalize_components(const NormStats& stats, double s_dist_raw,
                                          double s_sim_raw);

double combine_components(double d_norm, double sim_mistrust, ScoreMode mode);

using DistanceFn = std::function<DistanceResult(const CoresetModel&, std::span<const double>)>;
using SimilarityFn =
    std::function<SimilarityResult(const CoresetModel&, std::span<const double>)>;

LatentScore latent_mistrust(const CoresetModel& model, std::span<const double> vec,
                            ScoreMode mode = ScoreMode::Combined);
LatentScore latent_mistrust(const CoresetModel& model, const EmbeddingRecord& record,
                            ScoreMode mode = ScoreMode::Combined);

// Same composition with caller-supplied metrics.
LatentScore latent_mistrust_with(const CoresetModel& model, std::span<const double> vec,
                                 const DistanceFn& distance, const SimilarityFn& similarity,
                                 ScoreMode mode = ScoreMode::Combined);

std::vector<LatentScore> score_batch(const CoresetModel& model,
                                     const std::vector<EmbeddingRecord>& records,
                                     ScoreMode mode = ScoreMode::Combined);

// Reference window for a given mode, drawn from the same members as
// model.reference_scores.
std::vector<double> reference_scores_for(const CoresetModel& model, ScoreMode mode);

struct Neighbor {
  std::size_t index = 0;
  std::string id;
  ClassId label = 0;
  double similarity = 0.0;
  double member_trust = 0.0;  // 1 - leave-one-out s_lss of the member
};

struct Explanation {
  LatentScore score;
  std::vector<Neighbor> nearest;   // descending similarity
  std::vector<Neighbor> farthest;  // ascending similarity
};

Explanation explain(const CoresetModel& model, std::span<const double> vec, std::size_t k);

}  // namespace trustlapse
