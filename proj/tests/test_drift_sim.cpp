#include <algorithm>

#include "doctest.h"
#include "support/synthetic.hpp"
#include "trustlapse/drift_sim.hpp"
#include "trustlapse/error.hpp"

using namespace trustlapse;

namespace {

std::vector<EmbeddingRecord> pool(const std::string& prefix, std::size_t n, double v) {
  std::vector<EmbeddingRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({prefix + std::to_string(i), 0, {v, static_cast<double>(i)}, std::nullopt, prefix});
  }
  return out;
}

std::vector<Action> truth_actions(const StreamTruth& t) {
  std::vector<Action> out;
  for (bool o : t.ood_mask()) out.push_back(o ? Action::Flag : Action::Trust);
  return out;
}

void check_tiling(const StreamTruth& t) {
  std::size_t pos = 0;
  for (const auto& s : t.segments) {
    CHECK(s.start == pos);
    CHECK(s.length > 0);
    pos += s.length;
  }
  CHECK(pos == t.length);
  for (std::size_t i = 1; i < t.segments.size(); ++i) {
    const bool flip = t.segments[i].is_ood != t.segments[i - 1].is_ood;
    const bool listed = std::binary_search(t.change_points.begin(), t.change_points.end(),
                                           t.segments[i].start);
    CHECK(flip == listed);
  }
  CHECK(std::is_sorted(t.change_points.begin(), t.change_points.end()));
}

}  // namespace

TEST_CASE("p = 0 gives a single in-distribution regime") {
  const auto ind = pool("i", 10, 0.0), ood = pool("o", 10, 1.0);
  const std::vector<std::size_t> ks{50, 100};
  const auto [recs, truth] = generate_stream(ind, ood, 0.0, ks, 1000, 3);
  CHECK(recs.size() == 1000);
  CHECK(truth.change_points.empty());
  for (const auto& r : recs) CHECK(r.domain_tag == "i");
  for (std::size_t i = 0; i < recs.size(); ++i) CHECK(recs[i].seq == i);
  check_tiling(truth);
}

TEST_CASE("p = 1 with k = 50 gives four OOD segments and no change points") {
  const auto ind = pool("i", 10, 0.0), ood = pool("o", 10, 1.0);
  const std::vector<std::size_t> ks{50};
  const auto [recs, truth] = generate_stream(ind, ood, 1.0, ks, 200, 3);
  CHECK(truth.segments.size() == 4);
  for (const auto& s : truth.segments) CHECK(s.is_ood);
  CHECK(truth.change_points.empty());
}

TEST_CASE("fixed seed reproduces the stream and segment lengths come from k") {
  const auto ind = pool("i", 30, 0.0), ood = pool("o", 30, 1.0);
  const std::vector<std::size_t> ks{50, 100, 200, 500};
  const auto a = generate_stream(ind, ood, 0.5, ks, 10000, 99);
  const auto b = generate_stream(ind, ood, 0.5, ks, 10000, 99);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
  const auto c = generate_stream(ind, ood, 0.5, ks, 10000, 100);
  CHECK(c.second != a.second);
  const auto& segs = a.second.segments;
  for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
    CHECK(std::find(ks.begin(), ks.end(), segs[i].length) != ks.end());
  }
  CHECK(segs.back().length <= 500);
  check_tiling(a.second);
  const auto mask = a.second.ood_mask();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    CHECK(mask[i] == (a.first[i].domain_tag == "o"));
  }
}

TEST_CASE("truth tiles the stream for many seeds") {
  const std::vector<std::size_t> ks{7, 13, 50};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const auto d = draw_stream(5, 5, 0.3 + 0.01 * static_cast<double>(seed), ks, 777, rng);
    check_tiling(d.truth);
    REQUIRE(d.pool_index.size() == 777);
    for (std::size_t i = 0; i < 777; ++i) CHECK(d.pool_index[i] < 5);
  }
}

TEST_CASE("empty pools and bad parameters are rejected") {
  const auto ind = pool("i", 3, 0.0);
  const std::vector<std::size_t> ks{10};
  try {
    generate_stream(ind, {}, 0.5, ks, 100, 1);
    FAIL("expected EmptyPool");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyPool);
  }
  CHECK_THROWS_AS(generate_stream(ind, ind, 1.5, ks, 100, 1), Error);
  CHECK_THROWS_AS(generate_stream(ind, ind, 0.5, std::vector<std::size_t>{}, 100, 1), Error);
}

TEST_CASE("stream error arithmetic") {
  const auto ind = pool("i", 10, 0.0), ood = pool("o", 10, 1.0);
  const std::vector<std::size_t> ks{40, 90};
  const auto [recs, truth] = generate_stream(ind, ood, 0.5, ks, 1000, 5);
  REQUIRE(!truth.change_points.empty());
  CHECK(stream_error(truth_actions(truth), truth, 25) == 0.0);

  // one all-OOD segment, all TRUST
  StreamTruth one{{{0, 400, true}}, {}, 400};
  const std::vector<Action> trust(400, Action::Trust);
  CHECK(stream_error(trust, one, 25) == doctest::Approx((400.0 - 25.0) / 400.0));

  // a detector lagging exactly `grace` behind every change point
  const std::size_t grace = 25;
  auto lagged = truth_actions(truth);
  const auto mask = truth.ood_mask();
  for (std::size_t cp : truth.change_points) {
    for (std::size_t i = cp; i < std::min(cp + grace, truth.length); ++i) {
      lagged[i] = mask[cp - 1] ? Action::Flag : Action::Trust;
    }
  }
  CHECK(stream_error(lagged, truth, grace) == 0.0);
  CHECK(stream_error(lagged, truth, grace - 1) > 0.0);

  CHECK_THROWS_AS(stream_error(trust, truth, 25), Error);
}

TEST_CASE("error is non-increasing in grace") {
  const auto ind = pool("i", 10, 0.0), ood = pool("o", 10, 1.0);
  const std::vector<std::size_t> ks{30, 60};
  const auto [recs, truth] = generate_stream(ind, ood, 0.5, ks, 2000, 8);
  Rng rng(1);
  std::vector<Action> acts(truth.length);
  for (auto& a : acts) a = rng.bernoulli(0.5) ? Action::Flag : Action::Trust;
  double prev = 2.0;
  for (std::size_t g = 0; g <= 80; g += 5) {
    const double e = stream_error(acts, truth, g);
    CHECK(e <= prev);
    prev = e;
  }
}

TEST_CASE("frac_below is strict and policies parse") {
  ErrorDistribution d{{0.0, 0.05, 0.1, 0.15, 0.3}};
  CHECK(d.frac_below(0.1) == 0.4);
  CHECK(d.frac_below(0.2) == 0.8);
  CHECK(parse_decision_policy("kmeans") == DecisionPolicy::KMeans);
  CHECK(parse_decision_policy("kmeans-gated") == DecisionPolicy::GatedKMeans);
  CHECK(to_string(DecisionPolicy::GatedKMeans) == "kmeans-gated");
  CHECK(parse_decision_policy("alpha") == DecisionPolicy::Significance);
  CHECK(parse_decision_policy("trust") == DecisionPolicy::AlwaysTrust);
  CHECK(to_string(DecisionPolicy::Significance) == "alpha");
  CHECK_THROWS_AS(parse_decision_policy("vote"), Error);
}

TEST_CASE("trials on separated synthetic pools") {
  synth::Generator gen({.dim = 16});
  MonitorConfig cfg;
  cfg.coreset_frac = 0.05;
  const auto model = fit_coreset(gen.labelled(400, "t"), cfg);
  const auto ind = gen.held_in(300, "h");
  const auto ood = gen.ood(300, "o");

  TrialConfig tc;
  tc.length = 1000;
  tc.trials = 12;
  tc.k_choices = {50, 100, 200};
  tc.seed = 5;
  tc.threads = 3;
  const auto a = run_trials(model, ind, ood, tc);
  CHECK(a.per_stream_error.size() == 12);
  tc.threads = 1;
  const auto b = run_trials(model, ind, ood, tc);
  CHECK(a.per_stream_error == b.per_stream_error);
  CHECK(a.frac_below(0.2) >= 0.75);

  tc.trials = 1;
  CHECK(run_trials(model, ind, ood, tc).per_stream_error.size() == 1);

  // the all-TRUST baseline errs on most OOD time
  tc.trials = 12;
  tc.decision = DecisionPolicy::AlwaysTrust;
  const auto base = run_trials(model, ind, ood, tc);
  double mean_base = 0.0, mean_km = 0.0;
  for (std::size_t i = 0; i < 12; ++i) {
    mean_base += base.per_stream_error[i];
    mean_km += a.per_stream_error[i];
  }
  CHECK(mean_km < mean_base);
}

TEST_CASE("null streams err near the false-flag base rate") {
  synth::Generator gen({.dim = 16});
  MonitorConfig cfg;
  cfg.coreset_frac = 0.05;
  const auto model = fit_coreset(gen.labelled(400, "t"), cfg);
  const auto ind = gen.held_in(300, "h");
  const auto other = gen.held_in(300, "g");
  TrialConfig tc;
  tc.p = 0.0;
  tc.length = 1000;
  tc.trials = 10;
  tc.k_choices = {50, 100, 200};
  tc.decision = DecisionPolicy::Significance;
  const auto d = run_trials(model, ind, other, tc);
  double mean = 0.0;
  for (double e : d.per_stream_error) mean += e / 10.0;
  CHECK(mean <= 0.1);
  CHECK(d.frac_below(0.2) >= 0.9);
}

namespace {

std::vector<SequentialScore> history_of(const std::vector<double>& z) {
  std::vector<SequentialScore> h;
  for (std::size_t i = 0; i < z.size(); ++i) {
    SequentialScore s;
    s.seq = i;
    s.z = i < 2 ? 0.0 : z[i];
    s.s_mis = s.z;
    s.action = i < 2 ? Action::Warmup : Action::Trust;
    h.push_back(s);
  }
  return h;
}

std::size_t flags(const std::vector<Action>& a) {
  return static_cast<std::size_t>(std::count(a.begin(), a.end(), Action::Flag));
}

}  // namespace

TEST_CASE("gated kmeans keeps the split only across the critical value") {
  // both clusters below 1.96: plain kmeans flags the upper one, gated none
  const auto quiet = history_of({0, 0, -1.0, -0.8, 0.9, 1.1, 1.0, -0.9});
  CHECK(flags(apply_policy(quiet, DecisionPolicy::KMeans)) == 3);
  CHECK(flags(apply_policy(quiet, DecisionPolicy::GatedKMeans)) == 0);

  // both clusters above: every non-warmup position is FLAG
  const auto loud = history_of({0, 0, 4.0, 4.2, 6.0, 6.1, 4.1, 5.9});
  const auto all = apply_policy(loud, DecisionPolicy::GatedKMeans);
  CHECK(flags(all) == 6);
  CHECK(all[0] == Action::Trust);
  CHECK(all[1] == Action::Trust);

  // straddling: identical to plain kmeans
  const auto mixed = history_of({0, 0, 0.1, -0.2, 5.0, 5.5, 0.3, 4.8});
  CHECK(apply_policy(mixed, DecisionPolicy::GatedKMeans) == apply_policy(mixed, DecisionPolicy::KMeans));

  // a stricter alpha moves the gate above a 2.3 center
  const auto edge = history_of({0, 0, 0.0, 0.1, 2.3, 2.3});
  CHECK(flags(apply_policy(edge, DecisionPolicy::GatedKMeans, 0.05)) == 2);
  CHECK(flags(apply_policy(edge, DecisionPolicy::GatedKMeans, 0.01)) == 0);
}

TEST_CASE("gated kmeans removes the single-regime split on null streams") {
  synth::Generator gen({.dim = 16});
  MonitorConfig cfg;
  cfg.coreset_frac = 0.05;
  const auto model = fit_coreset(gen.labelled(400, "t"), cfg);
  const auto ind = gen.held_in(300, "h");
  const auto other = gen.held_in(300, "g");
  TrialConfig tc;
  tc.p = 0.0;
  tc.length = 1000;
  tc.trials = 10;
  tc.k_choices = {50, 100, 200};
  tc.decision = DecisionPolicy::KMeans;
  const auto plain = run_trials(model, ind, other, tc);
  tc.decision = DecisionPolicy::GatedKMeans;
  const auto gated = run_trials(model, ind, other, tc);
  double mean_plain = 0.0, mean_gated = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    mean_plain += plain.per_stream_error[i] / 10.0;
    mean_gated += gated.per_stream_error[i] / 10.0;
  }
  CHECK(mean_plain >= 0.2);
  CHECK(mean_gated <= 0.1);
}
