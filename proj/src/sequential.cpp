#include "trustlapse/sequential.hpp"

#include "trustlapse/error.hpp"

namespace trustlapse {

std::string_view to_string(Action action) noexcept {
  switch (action) {
    case Action::Trust: return "TRUST";
    case Action::Flag: return "FLAG";
    case Action::Warmup: return "WARMUP";
  }
  return "TRUST";
}

StreamState make_stream_state(std::string stream_id, std::vector<double> reference,
                              std::size_t w_b, double alpha) {
  if (reference.empty()) fail(ErrorCode::EmptyWindow, "reference window is empty");
  if (w_b < 2) fail(ErrorCode::InvalidConfig, "w_b must be >= 2");
  StreamState s;
  s.stream_id = std::move(stream_id);
  s.w_b = w_b;
  s.alpha = alpha;
  s.reference = std::move(reference);
  return s;
}

StreamState make_stream_state(std::string stream_id, const CoresetModel& model, ScoreMode mode) {
  return make_stream_state(std::move(stream_id), reference_scores_for(model, mode),
                           model.config.w_b, model.config.alpha);
}

SequentialScore step(StreamState& state, double s_lss, std::uint64_t seq) {
  if (state.seq_cursor && seq < *state.seq_cursor) {
    fail(ErrorCode::OutOfOrderSeq, "seq " + std::to_string(seq) + " arrived after " +
                                       std::to_string(*state.seq_cursor));
  }
  state.seq_cursor = seq;
  state.buffer.push_back(s_lss);
  if (state.buffer.size() > state.w_b) state.buffer.pop_front();

  SequentialScore out;
  out.seq = seq;
  out.s_lss = s_lss;
  if (state.buffer.size() < state.w_b) {
    out.action = Action::Warmup;
  } else {
    const std::vector<double> window(state.buffer.begin(), state.buffer.end());
    const auto mw = mann_whitney(state.reference, window);
    out.u_stat = mw.u_stat;
    out.z = mw.z;
    out.p_value = mw.p_value;
    out.s_mis = mw.z;
    out.significant = mw.p_value < state.alpha;
    out.action = out.significant && mw.z > 0.0 ? Action::Flag : Action::Trust;
  }
  state.history.push_back(out);
  return out;
}

void set_reference_window(StreamState& state, std::vector<double> scores) {
  if (scores.size() != state.reference.size()) {
    fail(ErrorCode::BadLength, "reference window needs " + std::to_string(state.reference.size()) +
                                   " scores, got " + std::to_string(scores.size()));
  }
  state.reference = std::move(scores);
}

}  // namespace trustlapse
