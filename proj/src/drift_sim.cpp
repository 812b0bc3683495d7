#include "trustlapse/drift_sim.hpp"

#include <algorithm>
#include <thread>

#include "trustlapse/error.hpp"
#include "trustlapse/mann_whitney.hpp"

namespace trustlapse {

std::vector<bool> StreamTruth::ood_mask() const {
  std::vector<bool> mask(length, false);
  for (const auto& s : segments) {
    for (std::size_t i = s.start; i < s.start + s.length; ++i) mask[i] = s.is_ood;
  }
  return mask;
}

StreamDraw draw_stream(std::size_t ind_size, std::size_t ood_size, double p,
                       std::span<const std::size_t> k_choices, std::size_t length, Rng& rng) {
  if (ind_size == 0 || ood_size == 0) fail(ErrorCode::EmptyPool, "InD and OOD pools must be non-empty");
  if (!(p >= 0.0 && p <= 1.0)) fail(ErrorCode::InvalidConfig, "p must lie in [0, 1]");
  if (k_choices.empty() || std::find(k_choices.begin(), k_choices.end(), 0U) != k_choices.end()) {
    fail(ErrorCode::InvalidConfig, "k choices must be non-empty and positive");
  }
  StreamDraw draw;
  draw.truth.length = length;
  draw.pool_index.reserve(length);
  draw.from_ood.reserve(length);
  std::size_t pos = 0;
  while (pos < length) {
    const bool ood = rng.bernoulli(p);
    const std::size_t k = k_choices[rng.below(k_choices.size())];
    const std::size_t len = std::min(k, length - pos);
    const std::size_t pool = ood ? ood_size : ind_size;
    for (std::size_t i = 0; i < len; ++i) {
      draw.pool_index.push_back(rng.below(pool));
      draw.from_ood.push_back(ood);
    }
    if (!draw.truth.segments.empty() && draw.truth.segments.back().is_ood != ood) {
      draw.truth.change_points.push_back(pos);
    }
    draw.truth.segments.push_back({pos, len, ood});
    pos += len;
  }
  return draw;
}

std::pair<std::vector<EmbeddingRecord>, StreamTruth> generate_stream(
    const std::vector<EmbeddingRecord>& ind_pool, const std::vector<EmbeddingRecord>& ood_pool,
    double p, std::span<const std::size_t> k_choices, std::size_t length, std::uint64_t seed) {
  Rng rng(seed);
  auto draw = draw_stream(ind_pool.size(), ood_pool.size(), p, k_choices, length, rng);
  std::vector<EmbeddingRecord> records;
  records.reserve(length);
  for (std::size_t i = 0; i < length; ++i) {
    EmbeddingRecord r = (draw.from_ood[i] ? ood_pool : ind_pool)[draw.pool_index[i]];
    r.seq = i;
    records.push_back(std::move(r));
  }
  return {std::move(records), std::move(draw.truth)};
}

double stream_error(std::span<const Action> actions, const StreamTruth& truth, std::size_t grace) {
  if (actions.size() != truth.length) {
    fail(ErrorCode::LengthMismatch, "got " + std::to_string(actions.size()) + " actions for a stream of " +
                                        std::to_string(truth.length));
  }
  if (truth.length == 0) return 0.0;
  std::vector<bool> excused(truth.length, false);
  auto excuse_from = [&](std::size_t start) {
    for (std::size_t i = start; i < std::min(truth.length, start + grace); ++i) excused[i] = true;
  };
  excuse_from(0);
  for (std::size_t cp : truth.change_points) excuse_from(cp);
  const auto ood = truth.ood_mask();
  std::size_t errors = 0;
  for (std::size_t i = 0; i < truth.length; ++i) {
    if (excused[i]) continue;
    const bool flagged = actions[i] == Action::Flag;
    if (flagged != ood[i]) ++errors;
  }
  return static_cast<double>(errors) / static_cast<double>(truth.length);
}

double ErrorDistribution::frac_below(double x) const {
  if (per_stream_error.empty()) return 0.0;
  const auto n = std::count_if(per_stream_error.begin(), per_stream_error.end(),
                               [x](double e) { return e < x; });
  return static_cast<double>(n) / static_cast<double>(per_stream_error.size());
}

DecisionPolicy parse_decision_policy(const std::string& text) {
  if (text == "kmeans") return DecisionPolicy::KMeans;
  if (text == "kmeans-gated") return DecisionPolicy::GatedKMeans;
  if (text == "alpha") return DecisionPolicy::Significance;
  if (text == "trust") return DecisionPolicy::AlwaysTrust;
  fail(ErrorCode::InvalidConfig, "unknown decision policy '" + text + "'");
}

std::string to_string(DecisionPolicy policy) {
  switch (policy) {
    case DecisionPolicy::KMeans: return "kmeans";
    case DecisionPolicy::GatedKMeans: return "kmeans-gated";
    case DecisionPolicy::Significance: return "alpha";
    case DecisionPolicy::AlwaysTrust: return "trust";
  }
  return "kmeans";
}

std::vector<Action> apply_policy(std::span<const SequentialScore> history, DecisionPolicy policy,
                                 double alpha) {
  std::vector<Action> actions(history.size(), Action::Trust);
  switch (policy) {
    case DecisionPolicy::KMeans:
      return decide(history).actions;
    case DecisionPolicy::GatedKMeans: {
      const double crit = two_sided_critical_z(alpha);
      auto split = decide(history).actions;
      double sum[2] = {0.0, 0.0};
      std::size_t n[2] = {0, 0};
      for (std::size_t i = 0; i < history.size(); ++i) {
        if (history[i].action == Action::Warmup) continue;
        const int c = split[i] == Action::Flag;
        sum[c] += history[i].z;
        ++n[c];
      }
      bool flag[2];
      for (int c = 0; c < 2; ++c) flag[c] = n[c] > 0 && sum[c] / static_cast<double>(n[c]) > crit;
      for (std::size_t i = 0; i < history.size(); ++i) {
        if (history[i].action == Action::Warmup) continue;
        actions[i] = flag[split[i] == Action::Flag] ? Action::Flag : Action::Trust;
      }
      break;
    }
    case DecisionPolicy::Significance:
      for (std::size_t i = 0; i < history.size(); ++i) {
        if (history[i].action == Action::Flag) actions[i] = Action::Flag;
      }
      break;
    case DecisionPolicy::AlwaysTrust:
      break;
  }
  return actions;
}

ErrorDistribution run_trials_scored(const CoresetModel& model, std::span<const double> ind_scores,
                                    std::span<const double> ood_scores, const TrialConfig& cfg) {
  if (ind_scores.empty() || ood_scores.empty()) {
    fail(ErrorCode::EmptyPool, "InD and OOD pools must be non-empty");
  }
  const std::size_t grace = cfg.grace == 0 ? model.config.w_b : cfg.grace;
  const auto reference = reference_scores_for(model, cfg.mode);
  ErrorDistribution dist;
  dist.per_stream_error.assign(cfg.trials, 0.0);

  auto run_one = [&](std::size_t t) {
    Rng rng(mix_seed(cfg.seed, t));
    const auto draw = draw_stream(ind_scores.size(), ood_scores.size(), cfg.p, cfg.k_choices,
                                  cfg.length, rng);
    auto state = make_stream_state("trial-" + std::to_string(t), reference, model.config.w_b,
                                   model.config.alpha);
    state.history.reserve(cfg.length);
    for (std::size_t i = 0; i < cfg.length; ++i) {
      const double s = (draw.from_ood[i] ? ood_scores : ind_scores)[draw.pool_index[i]];
      step(state, s, i);
    }
    const auto actions = apply_policy(state.history, cfg.decision, model.config.alpha);
    dist.per_stream_error[t] = stream_error(actions, draw.truth, grace);
  };

  // Validate arguments on the calling thread before fanning out.
  if (cfg.trials > 0) run_one(0);
  unsigned workers = cfg.threads != 0 ? cfg.threads : std::max(1U, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, cfg.trials));
  if (workers <= 1) {
    for (std::size_t t = 1; t < cfg.trials; ++t) run_one(t);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t t = 1 + w; t < cfg.trials; t += workers) run_one(t);
      });
    }
    for (auto& th : pool) th.join();
  }
  return dist;
}

ErrorDistribution run_trials(const CoresetModel& model,
                             const std::vector<EmbeddingRecord>& ind_pool,
                             const std::vector<EmbeddingRecord>& ood_pool, const TrialConfig& cfg) {
  std::vector<double> ind;
  std::vector<double> ood;
  ind.reserve(ind_pool.size());
  ood.reserve(ood_pool.size());
  for (const auto& r : ind_pool) ind.push_back(latent_mistrust(model, r, cfg.mode).s_lss);
  for (const auto& r : ood_pool) ood.push_back(latent_mistrust(model, r, cfg.mode).s_lss);
  return run_trials_scored(model, ind, ood, cfg);
}

}  // namespace trustlapse
