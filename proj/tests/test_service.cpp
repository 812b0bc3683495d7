#include <filesystem>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "support/synthetic.hpp"
#include "trustlapse/error.hpp"
#include "trustlapse/json_codec.hpp"
#include "trustlapse/service.hpp"

using namespace trustlapse;
namespace fs = std::filesystem;

namespace {

struct World {
  synth::Generator gen{synth::GaussianSetup{.dim = 16}};
  CoresetModel model;
  std::vector<EmbeddingRecord> ind;
  std::vector<EmbeddingRecord> ood;

  World() {
    MonitorConfig cfg;
    cfg.coreset_frac = 0.05;
    cfg.seed = 3;
    model = fit_coreset(gen.labelled(400, "t"), cfg);
    ind = gen.held_in(120, "h");
    ood = gen.ood(120, "o");
  }

  std::vector<EmbeddingRecord> labelled_ood(std::size_t n, const std::string& prefix) {
    auto out = gen.ood(n, prefix);
    for (auto& r : out) r.label = 0;
    return out;
  }

  std::vector<EmbeddingRecord> stream(std::size_t n_ind, std::size_t n_ood) const {
    std::vector<EmbeddingRecord> out(ind.begin(), ind.begin() + static_cast<std::ptrdiff_t>(n_ind));
    out.insert(out.end(), ood.begin(), ood.begin() + static_cast<std::ptrdiff_t>(n_ood));
    for (std::size_t i = 0; i < out.size(); ++i) out[i].seq = i;
    return out;
  }
};

World& world() {
  static World w;
  return w;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::BadRequest;
}

std::vector<SequentialScore> offline(const CoresetModel& m, const std::vector<EmbeddingRecord>& recs,
                                     std::vector<double> reference) {
  auto st = make_stream_state("offline", std::move(reference), m.config.w_b, m.config.alpha);
  for (const auto& r : recs) step(st, latent_mistrust(m, r), r.seq);
  return st.history;
}

std::vector<SequentialScore> seqs(const std::vector<HistoryEntry>& h) {
  std::vector<SequentialScore> out;
  for (const auto& e : h) out.push_back(e.sequential);
  return out;
}

}  // namespace

TEST_CASE("stream lifecycle and errors") {
  MonitorService svc(world().model);
  const auto info = svc.create_stream("cam-1");
  CHECK(info.model_version == 1);
  CHECK(code_of([&] { svc.create_stream("cam-1"); }) == ErrorCode::StreamExists);
  CHECK(code_of([&] { svc.create_stream("../etc"); }) == ErrorCode::BadRequest);
  CHECK(code_of([&] { svc.create_stream("x", 9); }) == ErrorCode::UnknownVersion);
  CHECK(code_of([&] { svc.ingest("nope", world().ind[0]); }) == ErrorCode::UnknownStream);
  CHECK(svc.streams().size() == 1);

  auto rec = world().ind[0];
  rec.seq = 5;
  svc.ingest("cam-1", rec);
  CHECK(code_of([&] { svc.ingest("cam-1", rec); }) == ErrorCode::OutOfOrderSeq);
  rec.seq = 4;
  CHECK(code_of([&] { svc.ingest("cam-1", rec); }) == ErrorCode::OutOfOrderSeq);
  rec.seq = 6;
  rec.vec.pop_back();
  CHECK(code_of([&] { svc.ingest("cam-1", rec); }) == ErrorCode::DimensionMismatch);
  CHECK(svc.session_info("cam-1").history == 1);
  CHECK(svc.ingest("cam-1", world().ind[1], true).sequential.seq == 6);

  svc.delete_stream("cam-1");
  CHECK(code_of([&] { svc.history("cam-1", 0, 10); }) == ErrorCode::UnknownStream);
}

TEST_CASE("warmup, paging, and offline equivalence") {
  auto& w = world();
  MonitorService svc(w.model);
  svc.create_stream("s");
  const auto recs = w.stream(60, 60);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto e = svc.ingest("s", recs[i]);
    CHECK(e.index == i);
    if (i < 24) CHECK(e.sequential.action == Action::Warmup);
    CHECK(e.latent == latent_mistrust(w.model, recs[i]));
  }
  const auto all = svc.history("s", 0, 1000);
  CHECK(seqs(all) == offline(w.model, recs, w.model.reference_scores));
  CHECK(svc.history("s", 100, 50).size() == 20);
  CHECK(svc.history("s", 120, 50).empty());
  CHECK(svc.history("s", 5000, 50).empty());
  CHECK(svc.history("s", 10, 5)[0].index == 10);
}

TEST_CASE("replaying a recorded stream through a fresh session") {
  auto& w = world();
  MonitorService svc(w.model);
  svc.create_stream("a");
  svc.create_stream("b");
  const auto recs = w.stream(50, 40);
  for (const auto& r : recs) svc.ingest("a", r);
  for (const auto& r : recs) svc.ingest("b", r);
  const auto a = svc.history("a", 0, 1000), b = svc.history("b", 0, 1000);
  CHECK(seqs(a) == seqs(b));
}

TEST_CASE("pinned sessions ignore coreset mutations until repinned") {
  auto& w = world();
  MonitorService svc(w.model);
  svc.create_stream("pinned");
  const auto recs = w.stream(40, 40);
  for (std::size_t i = 0; i < 40; ++i) svc.ingest("pinned", recs[i]);

  auto extra = w.labelled_ood(5, "fix");
  const auto v2 = svc.add_members(extra);
  CHECK(v2.version == 2);
  CHECK(v2.parent == 1);
  CHECK(v2.members == w.model.size() + 5);

  for (std::size_t i = 40; i < 80; ++i) svc.ingest("pinned", recs[i]);
  CHECK(seqs(svc.history("pinned", 0, 1000)) == offline(w.model, recs, w.model.reference_scores));

  // repin: the probe now scores exactly as offline scoring against the mutated model
  const auto expected = mutate_coreset(w.model, extra, {});
  svc.repin("pinned", 2);
  auto probe = w.ood[100];
  probe.seq = 1000;
  const auto e = svc.ingest("pinned", probe);
  CHECK(e.model_version == 2);
  CHECK(e.latent == latent_mistrust(expected, probe));
  CHECK(svc.reference_window("pinned") == expected.reference_scores);
  CHECK(code_of([&] { svc.repin("pinned", 77); }) == ErrorCode::UnknownVersion);
}

TEST_CASE("remove then add restores the original scores") {
  auto& w = world();
  MonitorService svc(w.model);
  const auto& victim = w.model.members[7];
  svc.remove_members({victim.id});
  const auto v3 = svc.add_members({{victim.id, 0, victim.vec, victim.label, {}}});
  CHECK(v3.version == 3);
  const auto m1 = svc.registry().get(1);
  const auto m3 = svc.registry().get(3);
  for (const auto& probe : w.ood) CHECK(latent_mistrust(*m3, probe) == latent_mistrust(*m1, probe));
  for (const auto& probe : w.ind) CHECK(latent_mistrust(*m3, probe) == latent_mistrust(*m1, probe));
  CHECK(code_of([&] { svc.remove_members({"ghost"}); }) == ErrorCode::UnknownMemberId);
  CHECK(svc.registry().list().size() == 3);
}

TEST_CASE("reference window swaps are per session") {
  auto& w = world();
  MonitorService svc(w.model);
  svc.create_stream("a");
  svc.create_stream("b");
  svc.create_stream("c");
  const auto recs = w.stream(80, 0);
  for (std::size_t i = 0; i < 40; ++i) {
    for (const char* s : {"a", "b", "c"}) svc.ingest(s, recs[i]);
  }
  svc.set_reference_window("b", ReferenceSource::Scores, svc.reference_window("b"));
  std::vector<double> high(w.model.config.w_a, 0.9);
  svc.set_reference_window("c", ReferenceSource::Scores, high);
  for (std::size_t i = 40; i < 80; ++i) {
    for (const char* s : {"a", "b", "c"}) svc.ingest(s, recs[i]);
  }
  CHECK(seqs(svc.history("a", 0, 100)) == seqs(svc.history("b", 0, 100)));
  const auto c = svc.history("c", 0, 100);
  CHECK(seqs(svc.history("a", 0, 40)) == seqs(svc.history("c", 0, 40)));
  for (std::size_t i = 40; i < 80; ++i) CHECK(c[i].sequential.significant);

  CHECK(code_of([&] { svc.set_reference_window("a", ReferenceSource::Scores, {0.1}); }) ==
        ErrorCode::BadLength);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < w.model.config.w_a; ++i) ids.push_back(w.model.members[i].id);
  svc.set_reference_window("a", ReferenceSource::Members, {}, ids);
  CHECK(svc.session_info("a").custom_reference);
  CHECK(svc.reference_window("a")[0] == w.model.member_scores[0].s_lss);
  ids.back() = "ghost";
  CHECK(code_of([&] { svc.set_reference_window("a", ReferenceSource::Members, {}, ids); }) ==
        ErrorCode::UnknownMemberId);
  svc.set_reference_window("a", ReferenceSource::Default);
  CHECK(svc.reference_window("a") == w.model.reference_scores);
  CHECK(!svc.session_info("a").custom_reference);
}

TEST_CASE("explanations") {
  auto& w = world();
  MonitorService svc(w.model);
  const auto& m = w.model.members[11];
  const auto ex = svc.explain_vector(m.vec, 3);
  REQUIRE(!ex.nearest.empty());
  CHECK(ex.nearest[0].id == m.id);
  CHECK(ex.nearest[0].similarity == doctest::Approx(1.0).epsilon(1e-15));

  ServiceOptions opts;
  opts.explain_horizon = 5;
  MonitorService small(w.model, opts);
  small.create_stream("s");
  const auto recs = w.stream(10, 0);
  for (const auto& r : recs) small.ingest("s", r);
  const auto last = small.explain_entry("s", std::nullopt, 4);
  CHECK(last.score == latent_mistrust(w.model, recs.back()));
  CHECK(small.explain_entry("s", 6, 4).score == latent_mistrust(w.model, recs[6]));
  CHECK(code_of([&] { small.explain_entry("s", 2, 4); }) == ErrorCode::BadRequest);
  CHECK(code_of([&] { small.explain_entry("s", 99, 4); }) == ErrorCode::BadRequest);
}

TEST_CASE("distribution summary equals recomputation from history") {
  auto& w = world();
  MonitorService svc(w.model);
  svc.create_stream("d");
  for (const auto& r : w.stream(70, 50)) svc.ingest("d", r);
  const auto d = svc.distribution("d", 30, 60);
  const auto h = svc.history("d", 30, 60);
  std::vector<double> lss, z;
  std::size_t flags = 0;
  for (const auto& e : h) {
    lss.push_back(e.latent.s_lss);
    if (e.sequential.action != Action::Warmup) z.push_back(e.sequential.z);
    flags += e.sequential.action == Action::Flag;
  }
  std::sort(lss.begin(), lss.end());
  CHECK(d.count == 60);
  CHECK(d.flags == flags);
  CHECK(d.s_lss.min == lss.front());
  CHECK(d.s_lss.max == lss.back());
  CHECK(d.s_lss.median == lss[29]);  // nearest rank ceil(0.5 * 60) = 30
  CHECK(d.s_lss.q95 == lss[56]);
  double mean = 0.0;
  for (double x : lss) mean += x / 60.0;
  CHECK(d.s_lss.mean == doctest::Approx(mean).epsilon(1e-12));
  CHECK(d.z.count == z.size());
  std::size_t binned = 0;
  for (auto c : d.s_lss_histogram) binned += c;
  CHECK(binned == 60);
  CHECK(svc.distribution("d", 500, 10).count == 0);
}

TEST_CASE("concurrent streams and mutations stay isolated") {
  auto& w = world();
  MonitorService svc(w.model);
  const auto recs = w.stream(60, 60);
  constexpr int kStreams = 4;
  for (int s = 0; s < kStreams; ++s) svc.create_stream("s" + std::to_string(s));
  std::vector<std::thread> threads;
  for (int s = 0; s < kStreams; ++s) {
    threads.emplace_back([&, s] {
      for (const auto& r : recs) svc.ingest("s" + std::to_string(s), r);
    });
  }
  threads.emplace_back([&] {
    for (int i = 0; i < 3; ++i) svc.add_members(w.labelled_ood(2, "m" + std::to_string(i)));
  });
  std::size_t seen = 0;
  threads.emplace_back([&] {
    while (seen < recs.size()) seen = svc.wait_history("s0", seen, std::chrono::milliseconds(200)).size() + seen;
  });
  for (auto& t : threads) t.join();
  const auto expect = offline(w.model, recs, w.model.reference_scores);
  for (int s = 0; s < kStreams; ++s) CHECK(seqs(svc.history("s" + std::to_string(s), 0, 1000)) == expect);
  CHECK(seen == recs.size());
  CHECK(svc.registry().latest()->version == 4);
}

TEST_CASE("feed waits end on new samples or shutdown") {
  auto& w = world();
  MonitorService svc(w.model);
  svc.create_stream("f");
  CHECK(svc.wait_history("f", 0, std::chrono::milliseconds(20)).empty());
  std::thread producer([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    svc.ingest("f", w.ind[0]);
  });
  const auto got = svc.wait_history("f", 0, std::chrono::seconds(10));
  producer.join();
  CHECK(got.size() == 1);

  std::thread stopper([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    svc.shutdown();
  });
  const auto t0 = std::chrono::steady_clock::now();
  CHECK(svc.wait_history("f", 1, std::chrono::seconds(10)).empty());
  stopper.join();
  CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(5));
}

TEST_CASE("history log and config file") {
  const auto dir = fs::temp_directory_path() / ("trustlapse-svc-" + std::to_string(::getpid()));
  fs::create_directories(dir);
  {
    std::ofstream cfg(dir / "service.json");
    cfg << R"({"w_a": 30, "w_b": 20, "alpha": 0.01, "bind": "0.0.0.0", "port": 9100,
               "history_dir": ")" << (dir / "logs").string() << R"(", "score_mode": "dist-only"})";
  }
  const auto opts = service_options_from_file(dir / "service.json");
  CHECK(opts.w_a == 30);
  CHECK(opts.w_b == 20);
  CHECK(opts.alpha == 0.01);
  CHECK(opts.port == 9100);
  CHECK(opts.bind_address == "0.0.0.0");
  CHECK(opts.mode == ScoreMode::DistOnly);
  {
    MonitorService svc(world().model, opts);
    CHECK(svc.registry().latest()->reference_scores.size() == 30);
    CHECK(svc.registry().latest()->config.w_b == 20);
    svc.create_stream("logged");
    for (const auto& r : world().stream(5, 0)) svc.ingest("logged", r);
  }
  std::ifstream log(dir / "logs" / "logged.jsonl");
  std::size_t lines = 0;
  for (std::string line; std::getline(log, line);) {
    const auto j = Json::parse(line);
    CHECK(j["stream_id"] == "logged");
    CHECK(j["index"] == lines);
    ++lines;
  }
  CHECK(lines == 5);
  {
    std::ofstream bad(dir / "bad.json");
    bad << R"({"w_a": "many"})";
  }
  CHECK(code_of([&] { service_options_from_file(dir / "bad.json"); }) == ErrorCode::InvalidConfig);
  fs::remove_all(dir);
}
