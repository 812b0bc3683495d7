#include "trustlapse/coreset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "trustlapse/error.hpp"
#include "trustlapse/kernels.hpp"
#include "trustlapse/latent_score.hpp"
#include "trustlapse/rng.hpp"

namespace trustlapse {

namespace {

constexpr int kRidgeEscalations = 4;
constexpr std::uint64_t kReferenceStream = 0x9e3779b97f4a7c15ULL;

struct FactoredCov {
  SquareMatrix factor;
  double ridge = 0.0;
};

// Ridge = epsilon * trace/d (epsilon alone when the trace vanishes); multiplied
// by 10 on each failed factorization.
FactoredCov factor_with_ridge(SquareMatrix cov, double epsilon) {
  const std::size_t d = cov.size();
  double trace = 0.0;
  for (std::size_t i = 0; i < d; ++i) trace += cov(i, i);
  double ridge = epsilon * (trace > 0.0 ? trace / static_cast<double>(d) : 1.0);
  for (int attempt = 0; attempt <= kRidgeEscalations; ++attempt) {
    SquareMatrix a = cov;
    for (std::size_t i = 0; i < d; ++i) a(i, i) += ridge;
    if (auto l = cholesky(a)) return {std::move(*l), ridge};
    ridge *= 10.0;
  }
  fail(ErrorCode::SingularCovariance, "covariance not positive definite after ridge escalation");
}

struct ClassFit {
  std::vector<std::size_t> members;  // indices into the member list
  std::vector<double> mean;
  SquareMatrix scatter;              // sum of (x - mean)(x - mean)^T
};

ClassFit accumulate_class(std::span<const std::vector<double>* const> vecs, std::size_t dim) {
  ClassFit fit;
  fit.mean.assign(dim, 0.0);
  for (const auto* v : vecs) kernels::axpy(1.0, *v, fit.mean);
  const double inv_n = 1.0 / static_cast<double>(vecs.size());
  for (double& m : fit.mean) m *= inv_n;

  fit.scatter = SquareMatrix(dim);
  std::vector<double> diff(dim);
  for (const auto* v : vecs) {
    for (std::size_t j = 0; j < dim; ++j) diff[j] = (*v)[j] - fit.mean[j];
    for (std::size_t r = 0; r < dim; ++r) kernels::axpy(diff[r], diff, fit.scatter.row(r));
  }
  return fit;
}

ClassGaussian gaussian_from(ClassId id, const std::vector<double>& mean,
                            const SquareMatrix& scatter, std::size_t count, double epsilon) {
  SquareMatrix cov = scatter;
  const double inv_n = 1.0 / static_cast<double>(count);
  for (double& x : cov.data()) x *= inv_n;
  auto factored = factor_with_ridge(std::move(cov), epsilon);
  return ClassGaussian{id, mean, std::move(factored.factor), factored.ridge, count};
}

void check_members(const std::vector<CoresetMember>& members, std::size_t dim) {
  std::unordered_set<std::string> seen;
  for (const auto& m : members) {
    validate_vector(m.vec, dim);
    if (m.label < 0) fail(ErrorCode::MissingLabel, "coreset member '" + m.id + "' has no label");
    if (!seen.insert(m.id).second) {
      fail(ErrorCode::DuplicateMemberId, "duplicate coreset member id '" + m.id + "'");
    }
  }
}

// Leave-one-out distance, similarity for every member.
void score_members(CoresetModel& model, const std::vector<ClassFit>& fits) {
  const std::size_t n = model.members.size();
  const std::size_t d = model.dim;
  const double epsilon = model.config.epsilon;
  std::vector<double> dist(n, 0.0);
  std::vector<double> sim(n, -std::numeric_limits<double>::infinity());
  std::vector<double> scratch(2 * d);
  std::vector<double> diff(d);

  for (std::size_t c = 0; c < fits.size(); ++c) {
    const auto& fit = fits[c];
    const auto& g = model.gaussians[c];
    const std::size_t nc = fit.members.size();
    for (std::size_t idx : fit.members) {
      const auto& x = model.members[idx].vec;
      double best = std::numeric_limits<double>::infinity();
      const bool hold_out = nc >= 2;
      if (hold_out) {
        const double k = static_cast<double>(nc) / static_cast<double>(nc - 1);
        for (std::size_t j = 0; j < d; ++j) diff[j] = x[j] - fit.mean[j];
        SquareMatrix scatter = fit.scatter;
        for (std::size_t r = 0; r < d; ++r) kernels::axpy(-k * diff[r], diff, scatter.row(r));
        std::vector<double> mean(d);
        for (std::size_t j = 0; j < d; ++j) {
          mean[j] = (static_cast<double>(nc) * fit.mean[j] - x[j]) / static_cast<double>(nc - 1);
        }
        const auto held = gaussian_from(g.class_id, mean, scatter, nc - 1, epsilon);
        best = held.quadratic(x, scratch);
      }
      for (std::size_t other = 0; other < model.gaussians.size(); ++other) {
        if (other == c && hold_out) continue;
        if (other == c && model.gaussians.size() > 1) continue;
        best = std::min(best, model.gaussians[other].quadratic(x, scratch));
      }
      dist[idx] = best;
    }
  }

  // Upper-triangle Gram scan; each pair updates both members.
  std::vector<double> dots(n);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const std::size_t rest = n - i - 1;
    kernels::ops().dot_rows(model.sim_rows.data() + (i + 1) * d, d, rest,
                            model.sim_rows.data() + i * d, d, dots.data());
    for (std::size_t r = 0; r < rest; ++r) {
      const std::size_t j = i + 1 + r;
      const double denom = model.sim_norms[i] * model.sim_norms[j];
      const double cs = denom > 0.0 ? std::clamp(dots[r] / denom, -1.0, 1.0) : 0.0;
      sim[i] = std::max(sim[i], cs);
      sim[j] = std::max(sim[j], cs);
    }
  }
  if (n == 1) sim[0] = model.sim_norms[0] > 0.0 ? 1.0 : 0.0;

  model.norm_stats.dist_lo = nearest_rank_percentile(dist, 1.0);
  model.norm_stats.dist_hi = nearest_rank_percentile(dist, 99.0);
  model.norm_stats.sim_lo = nearest_rank_percentile(sim, 1.0);
  model.norm_stats.sim_hi = nearest_rank_percentile(sim, 99.0);

  model.member_scores.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto comps = normalize_components(model.norm_stats, dist[i], sim[i]);
    model.member_scores[i] = MemberScore{
        dist[i], sim[i], comps.d_norm, comps.sim_mistrust,
        combine_components(comps.d_norm, comps.sim_mistrust, ScoreMode::Combined)};
  }
}

}  // namespace

double ClassGaussian::quadratic(std::span<const double> x, std::span<double> scratch) const {
  const std::size_t d = mean.size();
  auto diff = scratch.first(d);
  for (std::size_t j = 0; j < d; ++j) diff[j] = x[j] - mean[j];
  return quadratic_form(cov_factor, diff, scratch.subspan(d, d));
}

std::vector<std::string> CoresetModel::member_ids() const {
  std::vector<std::string> ids;
  ids.reserve(members.size());
  for (const auto& m : members) ids.push_back(m.id);
  return ids;
}

const ClassGaussian* CoresetModel::gaussian_for(ClassId c) const {
  for (const auto& g : gaussians) {
    if (g.class_id == c) return &g;
  }
  return nullptr;
}

double nearest_rank_percentile(std::vector<double> values, double pct) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

ClassGaussian fit_gaussian(ClassId class_id, std::span<const std::vector<double>* const> vecs,
                           std::size_t dim, double epsilon) {
  if (vecs.empty()) fail(ErrorCode::EmptyClass, "class " + std::to_string(class_id) + " is empty");
  const auto fit = accumulate_class(vecs, dim);
  return gaussian_from(class_id, fit.mean, fit.scatter, vecs.size(), epsilon);
}

CoresetModel build_model(std::vector<CoresetMember> members, const MonitorConfig& cfg,
                         std::uint64_t version) {
  validate(cfg);
  if (members.empty()) fail(ErrorCode::EmptyCoresetAfterMutation, "coreset has no members");
  const std::size_t dim = members.front().vec.size();
  if (dim == 0) fail(ErrorCode::DimensionMismatch, "embedding dimension must be >= 1");
  check_members(members, dim);
  std::sort(members.begin(), members.end(), [](const auto& a, const auto& b) {
    return a.label != b.label ? a.label < b.label : a.id < b.id;
  });

  CoresetModel model;
  model.version = version;
  model.dim = dim;
  model.config = cfg;
  model.members = std::move(members);
  const std::size_t n = model.members.size();

  model.sim_rows.resize(n * dim);
  model.sim_norms.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& v = model.members[i].vec;
    std::copy(v.begin(), v.end(), model.sim_rows.begin() + static_cast<std::ptrdiff_t>(i * dim));
    model.sim_norms[i] = std::sqrt(kernels::dot(v, v));
  }

  std::vector<ClassFit> fits;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    std::vector<const std::vector<double>*> vecs;
    std::vector<std::size_t> idx;
    while (j < n && model.members[j].label == model.members[i].label) {
      vecs.push_back(&model.members[j].vec);
      idx.push_back(j);
      ++j;
    }
    auto fit = accumulate_class(vecs, dim);
    fit.members = std::move(idx);
    model.gaussians.push_back(gaussian_from(model.members[i].label, fit.mean, fit.scatter,
                                            vecs.size(), cfg.epsilon));
    fits.push_back(std::move(fit));
    i = j;
  }

  score_members(model, fits);

  Rng rng(cfg.seed ^ kReferenceStream);
  if (n >= cfg.w_a) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order.begin(), order.end());
    model.reference_members.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cfg.w_a));
  } else {
    for (std::size_t i = 0; i < cfg.w_a; ++i) model.reference_members.push_back(rng.below(n));
  }
  for (std::size_t idx : model.reference_members) {
    model.reference_scores.push_back(model.member_scores[idx].s_lss);
  }
  return model;
}

std::vector<std::size_t> sample_coreset(const std::vector<EmbeddingRecord>& records,
                                        const MonitorConfig& cfg) {
  validate(cfg);
  if (records.empty()) fail(ErrorCode::EmptyClass, "no training records");
  validate_records(records);
  std::map<ClassId, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].label) {
      fail(ErrorCode::MissingLabel, "record '" + records[i].id + "' has no label");
    }
    by_class[*records[i].label].push_back(i);
  }
  Rng rng(cfg.seed);
  std::vector<std::size_t> chosen;
  for (auto& [label, idx] : by_class) {
    const double want = cfg.coreset_frac * static_cast<double>(idx.size());
    auto take = static_cast<std::size_t>(std::ceil(want - 1e-9));
    take = std::clamp<std::size_t>(take, 1, idx.size());
    rng.shuffle(idx.begin(), idx.end());
    chosen.insert(chosen.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return chosen;
}

CoresetModel fit_coreset(const std::vector<EmbeddingRecord>& records, const MonitorConfig& cfg) {
  const auto chosen = sample_coreset(records, cfg);
  std::vector<CoresetMember> members;
  members.reserve(chosen.size());
  for (std::size_t i : chosen) {
    members.push_back({records[i].id, *records[i].label, records[i].vec});
  }
  return build_model(std::move(members), cfg, 1);
}

CoresetModel mutate_coreset(const CoresetModel& model, const std::vector<EmbeddingRecord>& add,
                            const std::vector<std::string>& remove) {
  std::unordered_set<std::string> drop;
  std::unordered_set<std::string> present;
  for (const auto& m : model.members) present.insert(m.id);
  for (const auto& id : remove) {
    if (!present.contains(id)) fail(ErrorCode::UnknownMemberId, "unknown coreset member '" + id + "'");
    drop.insert(id);
  }
  std::vector<CoresetMember> members;
  for (const auto& m : model.members) {
    if (!drop.contains(m.id)) members.push_back(m);
  }
  for (const auto& r : add) {
    if (!r.label) fail(ErrorCode::MissingLabel, "added record '" + r.id + "' has no label");
    validate_vector(r.vec, model.dim);
    members.push_back({r.id, *r.label, r.vec});
  }
  if (members.empty()) {
    fail(ErrorCode::EmptyCoresetAfterMutation, "mutation would leave the coreset empty");
  }
  return build_model(std::move(members), model.config, model.version + 1);
}

}  // namespace trustlapse
