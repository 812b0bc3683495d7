#include "trustlapse/latent_score.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "trustlapse/error.hpp"
#include "trustlapse/kernels.hpp"

namespace trustlapse {

ScoreMode parse_score_mode(const std::string& text) {
  if (text == "combined") return ScoreMode::Combined;
  if (text == "dist-only") return ScoreMode::DistOnly;
  if (text == "sim-only") return ScoreMode::SimOnly;
  fail(ErrorCode::InvalidConfig, "unknown score mode '" + text + "'");
}

std::string to_string(ScoreMode mode) {
  switch (mode) {
    case ScoreMode::Combined: return "combined";
    case ScoreMode::DistOnly: return "dist-only";
    case ScoreMode::SimOnly: return "sim-only";
  }
  return "combined";
}

DistanceResult mahalanobis_score(const CoresetModel& model, std::span<const double> vec) {
  if (vec.size() != model.dim) {
    fail(ErrorCode::DimensionMismatch, "expected dimension " + std::to_string(model.dim) +
                                           ", got " + std::to_string(vec.size()));
  }
  for (double x : vec) {
    if (!std::isfinite(x)) fail(ErrorCode::NonFiniteInput, "query has a non-finite entry");
  }
  std::vector<double> scratch(2 * model.dim);
  DistanceResult best{std::numeric_limits<double>::infinity(), 0};
  for (const auto& g : model.gaussians) {
    const double q = g.quadratic(vec, scratch);
    if (q < best.value) best = {q, g.class_id};
  }
  return best;
}

SimilarityResult cosine_score(const CoresetModel& model, std::span<const double> vec) {
  if (vec.size() != model.dim) {
    fail(ErrorCode::DimensionMismatch, "expected dimension " + std::to_string(model.dim) +
                                           ", got " + std::to_string(vec.size()));
  }
  const double qnorm = std::sqrt(kernels::dot(vec, vec));
  if (!(qnorm > 0.0)) return {0.0, 0, true};
  std::vector<double> dots(model.size());
  kernels::ops().dot_rows(model.sim_rows.data(), model.dim, model.size(), vec.data(), model.dim,
                          dots.data());
  SimilarityResult best{-std::numeric_limits<double>::infinity(), 0, false};
  for (std::size_t i = 0; i < dots.size(); ++i) {
    const double denom = qnorm * model.sim_norms[i];
    const double cs = denom > 0.0 ? std::clamp(dots[i] / denom, -1.0, 1.0) : 0.0;
    if (cs > best.value) best = {cs, i, false};
  }
  return best;
}

NormalizedComponents normalize_components(const NormStats& stats, double s_dist_raw,
                                          double s_sim_raw) {
  NormalizedComponents out;
  out.sim_mistrust = std::clamp((1.0 - s_sim_raw) / 2.0, 0.0, 1.0);
  const double span = stats.dist_hi - stats.dist_lo;
  if (span > 0.0) {
    out.d_norm = std::clamp((s_dist_raw - stats.dist_lo) / span, 0.0, 1.0);
  } else {
    out.d_norm = s_dist_raw <= stats.dist_lo ? 0.0 : 1.0;
  }
  return out;
}

double combine_components(double d_norm, double sim_mistrust, ScoreMode mode) {
  switch (mode) {
    case ScoreMode::DistOnly: return d_norm;
    case ScoreMode::SimOnly: return sim_mistrust;
    case ScoreMode::Combined: break;
  }
  return d_norm * sim_mistrust;
}

LatentScore latent_mistrust_with(const CoresetModel& model, std::span<const double> vec,
                                 const DistanceFn& distance, const SimilarityFn& similarity,
                                 ScoreMode mode) {
  const auto dist = distance(model, vec);
  const auto sim = similarity(model, vec);
  const auto comps = normalize_components(model.norm_stats, dist.value, sim.value);
  LatentScore s;
  s.s_dist_raw = dist.value;
  s.s_sim_raw = sim.value;
  s.d_norm = comps.d_norm;
  s.sim_mistrust = comps.sim_mistrust;
  s.s_lss = combine_components(comps.d_norm, comps.sim_mistrust, mode);
  s.trust = 1.0 - s.s_lss;
  s.nearest_class = dist.nearest_class;
  s.nearest_member_index = sim.nearest_index;
  s.nearest_member = model.members[sim.nearest_index].id;
  s.zero_vector = sim.zero_vector;
  return s;
}

LatentScore latent_mistrust(const CoresetModel& model, std::span<const double> vec,
                            ScoreMode mode) {
  const auto dist = mahalanobis_score(model, vec);
  const auto sim = cosine_score(model, vec);
  return latent_mistrust_with(
      model, vec, [&](const CoresetModel&, std::span<const double>) { return dist; },
      [&](const CoresetModel&, std::span<const double>) { return sim; }, mode);
}

LatentScore latent_mistrust(const CoresetModel& model, const EmbeddingRecord& record,
                            ScoreMode mode) {
  return latent_mistrust(model, std::span<const double>(record.vec), mode);
}

std::vector<LatentScore> score_batch(const CoresetModel& model,
                                     const std::vector<EmbeddingRecord>& records,
                                     ScoreMode mode) {
  std::vector<LatentScore> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(latent_mistrust(model, r, mode));
  return out;
}

std::vector<double> reference_scores_for(const CoresetModel& model, ScoreMode mode) {
  std::vector<double> out;
  out.reserve(model.reference_members.size());
  for (std::size_t idx : model.reference_members) {
    const auto& m = model.member_scores[idx];
    out.push_back(combine_components(m.d_norm, m.sim_mistrust, mode));
  }
  return out;
}

Explanation explain(const CoresetModel& model, std::span<const double> vec, std::size_t k) {
  Explanation ex;
  ex.score = latent_mistrust(model, vec);
  const double qnorm = std::sqrt(kernels::dot(vec, vec));
  std::vector<double> sims(model.size(), 0.0);
  kernels::ops().dot_rows(model.sim_rows.data(), model.dim, model.size(), vec.data(), model.dim,
                          sims.data());
  for (std::size_t i = 0; i < sims.size(); ++i) {
    const double denom = qnorm * model.sim_norms[i];
    sims[i] = denom > 0.0 ? std::clamp(sims[i] / denom, -1.0, 1.0) : 0.0;
  }
  std::vector<std::size_t> order(model.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
  k = std::min(k, order.size());
  auto make = [&](std::size_t i) {
    return Neighbor{i, model.members[i].id, model.members[i].label, sims[i],
                    1.0 - model.member_scores[i].s_lss};
  };
  for (std::size_t r = 0; r < k; ++r) ex.nearest.push_back(make(order[r]));
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sims[a] < sims[b]; });
  for (std::size_t r = 0; r < k; ++r) ex.farthest.push_back(make(order[r]));
  return ex;
}

}  // namespace trustlapse
