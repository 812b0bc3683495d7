#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "trustlapse/config.hpp"
#include "trustlapse/linalg.hpp"
#include "trustlapse/record.hpp"

namespace trustlapse {

/// Class-conditional Gaussian: mean and the Cholesky factor of the ridged
/// covariance (Sigma + ridge * I).
struct ClassGaussian {
  ClassId class_id = 0;
  std::vector<double> mean;
  SquareMatrix cov_factor;
  double ridge = 0.0;
  std::size_t count = 0;

  // (x - mean)^T (Sigma + ridge I)^{-1} (x - mean); scratch holds >= 2*dim doubles.
  double quadratic(std::span<const double> x, std::span<double> scratch) const;

  friend bool operator==(const ClassGaussian&, const ClassGaussian&) = default;
};

// Normalization parameters for the two latent components. Distance bounds
// are the 1st/99th nearest-rank percentiles of the members' leave-one-out
// Mahalanobis distances; the similarity bounds are the same percentiles of
// leave-one-out max cosine and are reported only (the cosine map is fixed).
struct NormStats {
  double dist_lo = 0.0;
  double dist_hi = 0.0;
  double sim_lo = -1.0;
  double sim_hi = 1.0;

  friend bool operator==(const NormStats&, const NormStats&) = default;
};

struct CoresetMember {
  std::string id;
  ClassId label = 0;
  std::vector<double> vec;

  friend bool operator==(const CoresetMember&, const CoresetMember&) = default;
};

// Score of a member against the coreset with itself held out.
struct MemberScore {
  double s_dist_raw = 0.0;
  double s_sim_raw = 0.0;
  double d_norm = 0.0;
  double sim_mistrust = 0.0;
  double s_lss = 0.0;

  friend bool operator==(const MemberScore&, const MemberScore&) = default;
};

/// Immutable fitted snapshot. Members are kept in canonical (label, id)
/// order, so any two models built from the same membership and config are
/// identical.
struct CoresetModel {
  std::uint64_t version = 1;
  std::size_t dim = 0;
  MonitorConfig config;
  std::vector<ClassGaussian> gaussians;  // ascending class_id
  std::vector<CoresetMember> members;
  std::vector<double> sim_rows;          // members.size() x dim, row-major
  std::vector<double> sim_norms;         // ||member||
  NormStats norm_stats;
  std::vector<MemberScore> member_scores;     // parallel to members
  std::vector<std::size_t> reference_members;  // indices into members, length w_a
  std::vector<double> reference_scores;        // combined s_lss of reference_members

  [[nodiscard]] std::size_t size() const noexcept { return members.size(); }
  [[nodiscard]] std::vector<std::string> member_ids() const;
  [[nodiscard]] const ClassGaussian* gaussian_for(ClassId c) const;

  friend bool operator==(const CoresetModel&, const CoresetModel&) = default;
};

using ModelPtr = std::shared_ptr<const CoresetModel>;

// Fits the model from an explicit membership (no sampling).
CoresetModel build_model(std::vector<CoresetMember> members, const MonitorConfig& cfg,
                         std::uint64_t version = 1);

// Stratified sample of ceil(coreset_frac * n_c) per class, then build_model.
CoresetModel fit_coreset(const std::vector<EmbeddingRecord>& records, const MonitorConfig& cfg);

// Indices (into records) selected by fit_coreset's stratified sampler.
std::vector<std::size_t> sample_coreset(const std::vector<EmbeddingRecord>& records,
                                        const MonitorConfig& cfg);

// Returns a new model with version + 1 refitted from the edited membership.
CoresetModel mutate_coreset(const CoresetModel& model, const std::vector<EmbeddingRecord>& add,
                            const std::vector<std::string>& remove);

// Fits one class Gaussian (MLE covariance plus escalating ridge).
ClassGaussian fit_gaussian(ClassId class_id, std::span<const std::vector<double>* const> vecs,
                           std::size_t dim, double epsilon);

// Nearest-rank percentile, pct in (0, 100]. `values` need not be sorted.
double nearest_rank_percentile(std::vector<double> values, double pct);

}  // namespace trustlapse
