#include "doctest.h"
#include "support/synthetic.hpp"
#include "trustlapse/coreset.hpp"
#include "trustlapse/error.hpp"
#include "trustlapse/latent_score.hpp"
#include "trustlapse/sequential.hpp"

using namespace trustlapse;

namespace {

struct Fixture {
  synth::Generator gen{synth::GaussianSetup{}};
  CoresetModel model = fit_coreset(gen.labelled(1000, "t"), MonitorConfig{});
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

std::vector<double> lss(const CoresetModel& m, const std::vector<EmbeddingRecord>& recs) {
  std::vector<double> out;
  for (const auto& s : score_batch(m, recs)) out.push_back(s.s_lss);
  return out;
}

}  // namespace

TEST_CASE("first w_b - 1 samples are WARMUP") {
  auto st = make_stream_state("s", std::vector<double>(25, 0.1), 25, 0.05);
  for (std::uint64_t i = 0; i < 24; ++i) {
    const auto r = step(st, 0.1, i);
    CHECK(r.action == Action::Warmup);
    CHECK(r.p_value == 1.0);
  }
  CHECK(step(st, 0.1, 24).action != Action::Warmup);
  CHECK(st.buffer.size() == 25);
  step(st, 0.2, 25);
  CHECK(st.buffer.size() == 25);
  CHECK(st.buffer.back() == 0.2);
  CHECK(st.history.size() == 26);
}

TEST_CASE("in-distribution stream stays non-significant") {
  auto& f = fixture();
  auto st = make_stream_state("ind", f.model);
  CHECK(st.reference == f.model.reference_scores);
  const auto scores = lss(f.model, f.gen.held_in(600, "h"));
  std::size_t tested = 0, quiet = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto r = step(st, scores[i], i);
    if (r.action == Action::Warmup) continue;
    ++tested;
    if (r.p_value >= 0.05) ++quiet;
  }
  REQUIRE(tested == 600 - 24);
  CHECK(static_cast<double>(quiet) >= 0.95 * static_cast<double>(tested));
}

TEST_CASE("switch to far OOD becomes significant within w_b samples") {
  auto& f = fixture();
  auto st = make_stream_state("switch", f.model);
  auto recs = f.gen.held_in(200, "h");
  const auto ood = f.gen.ood(200, "o");
  recs.insert(recs.end(), ood.begin(), ood.end());
  const auto scores = lss(f.model, recs);
  std::optional<std::size_t> first;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto r = step(st, scores[i], i);
    if (i >= 200 && r.significant && !first) first = i;
  }
  REQUIRE(first.has_value());
  CHECK(*first < 200 + 25);
  CHECK(st.history.back().action == Action::Flag);
  CHECK(st.history.back().z > 0.0);
}

TEST_CASE("out-of-order sequence numbers are rejected") {
  auto st = make_stream_state("s", std::vector<double>(5, 0.1), 3, 0.05);
  step(st, 0.1, 10);
  step(st, 0.1, 10);  // repeats are tolerated
  try {
    step(st, 0.1, 9);
    FAIL("expected OutOfOrderSeq");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::OutOfOrderSeq);
  }
  CHECK(st.history.size() == 2);
  CHECK(st.buffer.size() == 2);
}

TEST_CASE("reference window swaps") {
  auto& f = fixture();
  const auto scores = lss(f.model, f.gen.held_in(120, "h"));

  auto a = make_stream_state("a", f.model);
  auto b = make_stream_state("b", f.model);
  for (std::size_t i = 0; i < 60; ++i) {
    step(a, scores[i], i);
    step(b, scores[i], i);
  }
  set_reference_window(b, f.model.reference_scores);
  for (std::size_t i = 60; i < 120; ++i) {
    step(a, scores[i], i);
    step(b, scores[i], i);
  }
  CHECK(a.history == b.history);

  // an OOD-like reference makes the same in-distribution stream look shifted
  auto c = make_stream_state("c", f.model);
  const auto ood_ref = lss(f.model, f.gen.ood(25, "r"));
  std::size_t before = 0, after = 0;
  for (std::size_t i = 0; i < 60; ++i) before += step(c, scores[i], i).significant ? 1 : 0;
  const auto old_history = c.history;
  set_reference_window(c, ood_ref);
  for (std::size_t i = 60; i < 120; ++i) after += step(c, scores[i], i).significant ? 1 : 0;
  CHECK(before <= 3);
  CHECK(after == 60);
  CHECK(std::equal(old_history.begin(), old_history.end(), c.history.begin()));
  CHECK(c.history.size() == 120);
  CHECK(c.history.back().z < 0.0);
  CHECK(c.history.back().action == Action::Trust);

  CHECK_THROWS_AS(set_reference_window(c, std::vector<double>(24, 0.1)), Error);
}

TEST_CASE("detectors with different references stay independent") {
  auto& f = fixture();
  const auto scores = lss(f.model, f.gen.ood(80, "o"));
  auto a = make_stream_state("a", f.model);
  auto b = make_stream_state("b", scores.front() > 0 ? std::vector<double>(25, 1.0)
                                                      : std::vector<double>(25, 0.0),
                             25, 0.05);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    step(a, scores[i], i);
    const auto before = a.history;
    step(b, scores[i], i);
    CHECK(a.history == before);
  }
  CHECK(a.history.back().significant);
  CHECK(a.history.back().u_stat != b.history.back().u_stat);
}

TEST_CASE("same input sequence gives identical histories") {
  auto& f = fixture();
  auto recs = f.gen.held_in(50, "h");
  const auto ood = f.gen.ood(50, "o");
  recs.insert(recs.end(), ood.begin(), ood.end());
  const auto scores = lss(f.model, recs);
  auto a = make_stream_state("x", f.model);
  auto b = make_stream_state("x", f.model);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    step(a, scores[i], i);
    step(b, scores[i], i);
  }
  CHECK(a.history == b.history);
  for (const auto& s : a.history) {
    CHECK(s.s_mis == s.z);
    CHECK(s.u_stat >= 0.0);
    CHECK(s.u_stat <= 625.0);
  }
}

TEST_CASE("action names") {
  CHECK(to_string(Action::Trust) == "TRUST");
  CHECK(to_string(Action::Flag) == "FLAG");
  CHECK(to_string(Action::Warmup) == "WARMUP");
}
