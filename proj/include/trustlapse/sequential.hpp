#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trustlapse/latent_score.hpp"
#include "trustlapse/mann_whitney.hpp"

namespace trustlapse {

enum class Action { Trust, Flag, Warmup };

std::string_view to_string(Action action) noexcept;

struct SequentialScore {
  std::uint64_t seq = 0;
  double s_lss = 0.0;
  double u_stat = 0.0;
  double z = 0.0;
  double p_value = 1.0;
  double s_mis = 0.0;  // = z
  bool significant = false;
  // Provisional: WARMUP before the first full window, then FLAG when the
  // test is significant with the window above the reference.
  Action action = Action::Warmup;

  friend bool operator==(const SequentialScore&, const SequentialScore&) = default;
};

/// Per-stream detector state: trailing window of the last w_b latent scores
/// tested against a reference window of w_a scores.
struct StreamState {
  std::string stream_id;
  std::size_t w_b = 25;
  double alpha = 0.05;
  std::deque<double> buffer;
  std::vector<double> reference;
  std::optional<std::uint64_t> seq_cursor;
  std::vector<SequentialScore> history;
};

StreamState make_stream_state(std::string stream_id, const CoresetModel& model,
                              ScoreMode mode = ScoreMode::Combined);
StreamState make_stream_state(std::string stream_id, std::vector<double> reference,
                              std::size_t w_b, double alpha);

// Appends to state.history and returns the new entry. Throws OutOfOrderSeq
// when seq is lower than the last processed one.
SequentialScore step(StreamState& state, double s_lss, std::uint64_t seq);
inline SequentialScore step(StreamState& state, const LatentScore& score, std::uint64_t seq) {
  return step(state, score.s_lss, seq);
}

// Replaces the reference window; history is untouched. Throws BadLength
// unless scores.size() equals the current reference length.
void set_reference_window(StreamState& state, std::vector<double> scores);

struct Decision {
  std::vector<Action> actions;  // Trust / Flag only
  double threshold = 0.0;
  bool degenerate = false;      // all scores identical
  std::size_t iterations = 0;
};

// Two-cluster 1-D k-means over the s_mis values; the cluster with the
// larger center is FLAG and the threshold is the midpoint of the centers.
Decision decide(std::span<const double> scores);

// decide() over the non-warmup entries; warmup positions become TRUST.
Decision decide(std::span<const SequentialScore> history);

}  // namespace trustlapse
