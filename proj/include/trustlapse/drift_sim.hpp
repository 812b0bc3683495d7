#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "trustlapse/coreset.hpp"
#include "trustlapse/latent_score.hpp"
#include "trustlapse/rng.hpp"
#include "trustlapse/sequential.hpp"

namespace trustlapse {

struct Segment {
  std::size_t start = 0;
  std::size_t length = 0;
  bool is_ood = false;

  friend bool operator==(const Segment&, const Segment&) = default;
};

/// Ground truth of a generated stream. Segments are the generator's draws
/// (consecutive segments may share a regime); change points are only the
/// positions where the regime actually flips.
struct StreamTruth {
  std::vector<Segment> segments;
  std::vector<std::size_t> change_points;
  std::size_t length = 0;

  [[nodiscard]] std::vector<bool> ood_mask() const;

  friend bool operator==(const StreamTruth&, const StreamTruth&) = default;
};

struct StreamDraw {
  std::vector<std::size_t> pool_index;  // index into the InD or OOD pool
  std::vector<bool> from_ood;
  StreamTruth truth;
};

// Index-level generator shared by generate_stream and run_trials.
StreamDraw draw_stream(std::size_t ind_size, std::size_t ood_size, double p,
                       std::span<const std::size_t> k_choices, std::size_t length, Rng& rng);

// Records get seq 0..length-1 in stream order.
std::pair<std::vector<EmbeddingRecord>, StreamTruth> generate_stream(
    const std::vector<EmbeddingRecord>& ind_pool, const std::vector<EmbeddingRecord>& ood_pool,
    double p, std::span<const std::size_t> k_choices, std::size_t length, std::uint64_t seed);

// Fraction of samples mis-decided: FLAG on InD or TRUST on OOD. Positions in
// [cp, cp + grace) after each change point, and the first `grace` positions
// of the stream, never count.
double stream_error(std::span<const Action> actions, const StreamTruth& truth, std::size_t grace);

struct ErrorDistribution {
  std::vector<double> per_stream_error;

  // Fraction of streams whose error is strictly below x.
  [[nodiscard]] double frac_below(double x) const;
};

// KMeans: plain 2-cluster split of z. GatedKMeans: same partition, but each
// cluster is FLAG only when its center exceeds the two-sided critical z at
// alpha, so single-regime streams are not split in two. Significance: the
// online provisional flags.
enum class DecisionPolicy { KMeans, GatedKMeans, Significance, AlwaysTrust };

DecisionPolicy parse_decision_policy(const std::string& text);  // kmeans | kmeans-gated | alpha | trust
std::string to_string(DecisionPolicy policy);

struct TrialConfig {
  double p = 0.5;
  std::vector<std::size_t> k_choices{50, 100, 200, 500, 1000, 5000};
  std::size_t length = 10000;
  std::size_t trials = 1000;
  std::uint64_t seed = 0;
  std::size_t grace = 0;  // 0 = use the model's w_b
  DecisionPolicy decision = DecisionPolicy::GatedKMeans;
  ScoreMode mode = ScoreMode::Combined;
  unsigned threads = 0;    // 0 = hardware concurrency
};

// Actions for a finished history under a policy (warmup -> TRUST).
std::vector<Action> apply_policy(std::span<const SequentialScore> history, DecisionPolicy policy,
                                 double alpha = 0.05);

// Per-trial: draw a stream, score it, run the detector, decide, score the
// decisions. Trial t uses mix_seed(cfg.seed, t).
ErrorDistribution run_trials(const CoresetModel& model,
                             const std::vector<EmbeddingRecord>& ind_pool,
                             const std::vector<EmbeddingRecord>& ood_pool, const TrialConfig& cfg);

// Same, with the pools already reduced to latent scores.
ErrorDistribution run_trials_scored(const CoresetModel& model, std::span<const double> ind_scores,
                                    std::span<const double> ood_scores, const TrialConfig& cfg);

}  // namespace trustlapse
