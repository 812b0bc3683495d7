#include "trustlapse/cli.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <csignal>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "trustlapse/drift_sim.hpp"
#include "trustlapse/embedding_io.hpp"
#include "trustlapse/error.hpp"
#include "trustlapse/http_server.hpp"
#include "trustlapse/json_codec.hpp"
#include "trustlapse/metrics.hpp"
#include "trustlapse/service.hpp"

namespace trustlapse {

namespace {

class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) : out_(&fallback) {
    if (!path.empty() && path != "-") {
      file_.open(path, std::ios::trunc);
      if (!file_) fail(ErrorCode::IoError, "cannot write " + path);
      out_ = &file_;
    }
  }
  std::ostream& operator*() { return *out_; }
  void line(const Json& j) { *out_ << j.dump() << '\n'; }
  void finish() {
    out_->flush();
    if (!*out_) fail(ErrorCode::IoError, "write failed");
  }

 private:
  std::ofstream file_;
  std::ostream* out_;
};

std::vector<EmbeddingRecord> read_input(const std::string& path) {
  if (path == "-") return read_embeddings(std::cin);
  return read_embeddings(std::filesystem::path(path));
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

Json record_header(const EmbeddingRecord& r) {
  Json j{{"id", r.id}, {"seq", r.seq}};
  if (r.label) j["label"] = *r.label;
  if (r.domain_tag) j["domain"] = *r.domain_tag;
  return j;
}

struct FitArgs {
  std::string input;
  std::string output;
  MonitorConfig cfg;
};

struct ScoreArgs {
  std::string model;
  std::string input;
  std::string output;
  std::string mode = "combined";
};

struct MonitorArgs {
  std::string model;
  std::string input;
  std::string output;
  std::string summary;
  std::string mode = "combined";
  std::string decision = "kmeans-gated";
};

struct SimulateArgs {
  std::string model;
  std::string ind;
  std::string ood;
  std::string output;
  std::string mode = "combined";
  std::string decision = "kmeans-gated";
  std::vector<double> p{0.2, 0.5, 0.7};
  std::vector<std::size_t> k{50, 100, 200, 500};
  std::size_t length = 2000;
  std::size_t n = 200;
  std::uint64_t seed = 0;
  std::size_t grace = 0;
  unsigned threads = 0;
  bool timestamp = true;
};

struct EvalArgs {
  std::string scores;
  std::string splits;
  std::string output;
  std::string field = "s_lss";
  std::vector<std::string> positive_domains;
};

struct ExplainArgs {
  std::string model;
  std::string query;
  std::vector<double> vec;
  std::string output;
  std::size_t k = 5;
};

struct ServeArgs {
  std::string model;
  std::string config;
  std::string host;
  int port = -1;
};

void cmd_fit(const FitArgs& a, std::ostream& out) {
  const auto records = read_input(a.input);
  spdlog::info("fitting on {} records", records.size());
  const auto model = fit_coreset(records, a.cfg);
  save_model(a.output, model);
  Json summary{{"model", a.output},
               {"version", model.version},
               {"dim", model.dim},
               {"members", model.size()},
               {"classes", model.gaussians.size()},
               {"config", to_json(model.config)},
               {"norm_stats",
                {{"dist_lo", model.norm_stats.dist_lo},
                 {"dist_hi", model.norm_stats.dist_hi},
                 {"sim_lo", model.norm_stats.sim_lo},
                 {"sim_hi", model.norm_stats.sim_hi}}}};
  out << summary.dump() << '\n';
}

void cmd_score(const ScoreArgs& a, std::ostream& out) {
  const auto model = load_model(a.model);
  const auto mode = parse_score_mode(a.mode);
  const auto records = read_input(a.input);
  Output o(a.output, out);
  for (const auto& r : records) {
    auto j = record_header(r);
    j.update(to_json(latent_mistrust(model, r, mode)));
    o.line(j);
  }
  o.finish();
}

void cmd_monitor(const MonitorArgs& a, std::ostream& out) {
  const auto model = load_model(a.model);
  const auto mode = parse_score_mode(a.mode);
  const auto policy = parse_decision_policy(a.decision);
  const auto records = read_input(a.input);
  auto state = make_stream_state("cli", model, mode);
  for (const auto& r : records) step(state, latent_mistrust(model, r, mode), r.seq);
  const auto actions = apply_policy(state.history, policy, model.config.alpha);
  Output o(a.output, out);
  std::size_t flags = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto j = to_json(state.history[i]);
    j["id"] = records[i].id;
    j["online_action"] = j["action"];
    j["action"] = std::string(to_string(actions[i]));
    flags += actions[i] == Action::Flag;
    o.line(j);
  }
  o.finish();
  if (!a.summary.empty()) {
    Json s{{"samples", records.size()}, {"flags", flags}, {"decision", a.decision}};
    if (policy == DecisionPolicy::KMeans || policy == DecisionPolicy::GatedKMeans) {
      const auto d = decide(std::span<const SequentialScore>(state.history));
      s["threshold"] = d.threshold;
      s["degenerate"] = d.degenerate;
      s["iterations"] = d.iterations;
    }
    std::ofstream f(a.summary, std::ios::trunc);
    if (!f) fail(ErrorCode::IoError, "cannot write " + a.summary);
    f << s.dump() << '\n';
  }
}

void cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  const auto model = load_model(a.model);
  const auto ind = read_input(a.ind);
  const auto ood = read_input(a.ood);
  TrialConfig tc;
  tc.k_choices = a.k;
  tc.length = a.length;
  tc.trials = a.n;
  tc.seed = a.seed;
  tc.grace = a.grace;
  tc.decision = parse_decision_policy(a.decision);
  tc.mode = parse_score_mode(a.mode);
  tc.threads = a.threads;
  if (a.length == 0) fail(ErrorCode::InvalidConfig, "length must be >= 1");

  std::vector<double> ind_scores, ood_scores;
  for (const auto& r : ind) ind_scores.push_back(latent_mistrust(model, r, tc.mode).s_lss);
  for (const auto& r : ood) ood_scores.push_back(latent_mistrust(model, r, tc.mode).s_lss);

  Json results = Json::array();
  for (double p : a.p) {
    tc.p = p;
    spdlog::info("simulating p={} over {} trials", p, tc.trials);
    const auto dist = run_trials_scored(model, ind_scores, ood_scores, tc);
    results.push_back(Json{{"p", p},
                           {"per_stream_error", dist.per_stream_error},
                           {"frac_below_0.10", dist.frac_below(0.10)},
                           {"frac_below_0.20", dist.frac_below(0.20)}});
  }
  Json report{{"config",
               {{"p", a.p},
                {"k", a.k},
                {"length", a.length},
                {"trials", a.n},
                {"seed", a.seed},
                {"grace", a.grace == 0 ? model.config.w_b : a.grace},
                {"decision", a.decision},
                {"score_mode", a.mode},
                {"w_a", model.config.w_a},
                {"w_b", model.config.w_b},
                {"alpha", model.config.alpha},
                {"model_version", model.version}}},
              {"results", results}};
  if (a.timestamp) report["generated_at"] = utc_now();
  Output o(a.output, out);
  *o << report.dump(2) << '\n';
  o.finish();
}

void cmd_eval(const EvalArgs& a, std::ostream& out) {
  std::ifstream in(a.scores);
  if (!in) fail(ErrorCode::IoError, "cannot open " + a.scores);
  const std::set<std::string> pos_domains(a.positive_domains.begin(), a.positive_domains.end());
  std::vector<ScoredSample> samples;
  bool labelled = true;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      fail(ErrorCode::MalformedJson, "line " + std::to_string(line_no) + ": " + e.what());
    }
    ScoredSample s;
    if (!j.contains(a.field) || !j[a.field].is_number()) {
      fail(ErrorCode::MalformedJson, "line " + std::to_string(line_no) + ": missing numeric '" + a.field + "'");
    }
    s.score = j[a.field].get<double>();
    if (!std::isfinite(s.score)) fail(ErrorCode::NonFiniteInput, "line " + std::to_string(line_no));
    s.group = j.value("domain", std::string());
    if (j.contains("positive")) {
      if (!j["positive"].is_boolean()) {
        fail(ErrorCode::MalformedJson, "line " + std::to_string(line_no) + ": 'positive' must be boolean");
      }
      s.positive = j["positive"].get<bool>();
    } else if (!pos_domains.empty()) {
      s.positive = pos_domains.contains(s.group);
    } else {
      labelled = false;
    }
    samples.push_back(std::move(s));
  }
  if (!labelled && a.splits.empty()) {
    fail(ErrorCode::BadRequest, "no 'positive' field, --positive-domain or --splits given");
  }
  Json report = Json::object();
  if (labelled) report["overall"] = to_json(metric_report(samples));
  if (!a.splits.empty()) {
    std::ifstream sf(a.splits);
    if (!sf) fail(ErrorCode::IoError, "cannot open " + a.splits);
    SplitSpec spec;
    try {
      spec = Json::parse(sf).get<SplitSpec>();
    } catch (const Json::exception& e) {
      fail(ErrorCode::MalformedJson, a.splits + ": " + e.what());
    }
    Json splits = Json::object();
    for (const auto& [name, r] : split_report(samples, spec)) {
      if (r.report) {
        splits[name] = to_json(*r.report);
      } else {
        splits[name] = Json{{"error", to_string(*r.error)}, {"message", r.message}};
      }
    }
    report["splits"] = splits;
  }
  Output o(a.output, out);
  *o << report.dump(2) << '\n';
  o.finish();
}

void cmd_explain(const ExplainArgs& a, std::ostream& out) {
  const auto model = load_model(a.model);
  std::vector<EmbeddingRecord> queries;
  if (!a.query.empty()) queries = read_input(a.query);
  if (!a.vec.empty()) {
    EmbeddingRecord r;
    r.id = "query";
    for (double x : a.vec) r.vec.push_back(static_cast<float>(x));
    queries.push_back(r);
  }
  if (queries.empty()) fail(ErrorCode::BadRequest, "give --query or --vec");
  Output o(a.output, out);
  for (const auto& q : queries) {
    validate_vector(q.vec, model.dim);
    auto j = to_json(explain(model, q.vec, a.k), a.k);
    j["id"] = q.id;
    o.line(j);
  }
  o.finish();
}

void cmd_serve(const ServeArgs& a, std::ostream& err) {
  auto opts = a.config.empty() ? ServiceOptions{} : service_options_from_file(a.config);
  if (!a.host.empty()) opts.bind_address = a.host;
  if (a.port >= 0) opts.port = a.port;
  auto model = load_model(a.model);
  if (a.config.empty()) {
    opts.w_a = model.config.w_a;
    opts.w_b = model.config.w_b;
    opts.alpha = model.config.alpha;
  }
  MonitorService service(std::move(model), opts);
  HttpServer server(service);
  const int port = server.bind(opts.bind_address, opts.port);

  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  server.start();
  err << Json{{"listening", opts.bind_address + ":" + std::to_string(port)}, {"port", port}}.dump()
      << std::endl;
  spdlog::info("serving on {}:{}", opts.bind_address, port);
  int sig = 0;
  sigwait(&set, &sig);
  spdlog::info("signal {}, shutting down", sig);
  server.stop();
}

void add_config_flags(CLI::App* app, MonitorConfig& cfg) {
  app->add_option("--coreset-frac", cfg.coreset_frac, "Fraction of each class kept in the coreset")
      ->capture_default_str();
  app->add_option("--wa", cfg.w_a, "Reference window size")->capture_default_str();
  app->add_option("--wb", cfg.w_b, "Sliding window size")->capture_default_str();
  app->add_option("--alpha", cfg.alpha, "Significance level")->capture_default_str();
  app->add_option("--epsilon", cfg.epsilon, "Relative covariance ridge")->capture_default_str();
  app->add_option("--seed", cfg.seed, "Sampling seed")->capture_default_str();
}

}  // namespace

void configure_logging() {
  static const bool once = [] {
    auto logger = spdlog::stderr_color_mt("trustlapse");
    spdlog::set_default_logger(logger);
    return true;
  }();
  (void)once;
  const char* env = std::getenv("TRUSTLAPSE_LOG");
  spdlog::set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  configure_logging();
  CLI::App app{"Streaming mistrust scoring over latent embeddings", "trustlapse"};
  app.require_subcommand(1);

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a coreset model from labelled embeddings");
  fit_cmd->add_option("-i,--input", fit.input, "Embeddings (JSONL or binary)")->required();
  fit_cmd->add_option("-o,--output", fit.output, "Model file to write")->required();
  add_config_flags(fit_cmd, fit.cfg);

  ScoreArgs score;
  auto* score_cmd = app.add_subcommand("score", "Per-sample latent mistrust scores as JSONL");
  score_cmd->add_option("-m,--model", score.model)->required();
  score_cmd->add_option("-i,--input", score.input)->required();
  score_cmd->add_option("-o,--output", score.output);
  score_cmd->add_option("--score-mode", score.mode)
      ->check(CLI::IsMember({"combined", "dist-only", "sim-only"}))->capture_default_str();

  MonitorArgs mon;
  auto* mon_cmd = app.add_subcommand("monitor", "Sequential scores and actions for a stream");
  mon_cmd->add_option("-m,--model", mon.model)->required();
  mon_cmd->add_option("-i,--input", mon.input)->required();
  mon_cmd->add_option("-o,--output", mon.output);
  mon_cmd->add_option("--summary", mon.summary, "Write a JSON summary here");
  mon_cmd->add_option("--score-mode", mon.mode)
      ->check(CLI::IsMember({"combined", "dist-only", "sim-only"}))->capture_default_str();
  mon_cmd->add_option("--decision", mon.decision)
      ->check(CLI::IsMember({"kmeans", "kmeans-gated", "alpha", "trust"}))->capture_default_str();

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Drift-stream trials over InD/OOD pools");
  sim_cmd->add_option("-m,--model", sim.model)->required();
  sim_cmd->add_option("--ind", sim.ind, "In-distribution pool")->required();
  sim_cmd->add_option("--ood", sim.ood, "Out-of-distribution pool")->required();
  sim_cmd->add_option("-o,--output", sim.output);
  sim_cmd->add_option("--p", sim.p, "OOD segment probabilities")->delimiter(',')->capture_default_str();
  sim_cmd->add_option("--k", sim.k, "Segment length choices")->delimiter(',')->capture_default_str();
  sim_cmd->add_option("--length", sim.length)->capture_default_str();
  sim_cmd->add_option("--n", sim.n, "Trials per p")->capture_default_str();
  sim_cmd->add_option("--seed", sim.seed)->capture_default_str();
  sim_cmd->add_option("--grace", sim.grace, "Grace window (0 = w_b)")->capture_default_str();
  sim_cmd->add_option("--threads", sim.threads, "Worker threads (0 = all cores)");
  sim_cmd->add_option("--score-mode", sim.mode)
      ->check(CLI::IsMember({"combined", "dist-only", "sim-only"}))->capture_default_str();
  sim_cmd->add_option("--decision", sim.decision)
      ->check(CLI::IsMember({"kmeans", "kmeans-gated", "alpha", "trust"}))->capture_default_str();
  sim_cmd->add_flag("!--no-timestamp", sim.timestamp, "Omit generated_at");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "AUROC / AUPR / FPR80 over scored JSONL");
  eval_cmd->add_option("-s,--scores", ev.scores)->required();
  eval_cmd->add_option("--splits", ev.splits, "JSON: split -> group -> positive");
  eval_cmd->add_option("--field", ev.field, "Score field")->capture_default_str();
  eval_cmd->add_option("--positive-domain", ev.positive_domains, "Domain tags counted positive")
      ->delimiter(',');
  eval_cmd->add_option("-o,--output", ev.output);

  ExplainArgs ex;
  auto* ex_cmd = app.add_subcommand("explain", "Nearest and farthest coreset members for queries");
  ex_cmd->add_option("-m,--model", ex.model)->required();
  ex_cmd->add_option("-q,--query", ex.query, "Query embeddings file");
  ex_cmd->add_option("--vec", ex.vec, "Query vector, comma separated")->delimiter(',');
  ex_cmd->add_option("-k", ex.k)->capture_default_str();
  ex_cmd->add_option("-o,--output", ex.output);

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the monitoring HTTP service");
  serve_cmd->add_option("-m,--model", serve.model)->required();
  serve_cmd->add_option("-c,--config", serve.config, "Service JSON config");
  serve_cmd->add_option("--host", serve.host);
  serve_cmd->add_option("--port", serve.port);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    for (const auto* sub : app.get_subcommands()) err << sub->help();
    return 2;
  }

  try {
    if (fit_cmd->parsed()) cmd_fit(fit, out);
    if (score_cmd->parsed()) cmd_score(score, out);
    if (mon_cmd->parsed()) cmd_monitor(mon, out);
    if (sim_cmd->parsed()) cmd_simulate(sim, out);
    if (eval_cmd->parsed()) cmd_eval(ev, out);
    if (ex_cmd->parsed()) cmd_explain(ex, out);
    if (serve_cmd->parsed()) cmd_serve(serve, err);
  } catch (const Error& e) {
    err << Json{{"error", to_string(e.code())}, {"message", e.what()}}.dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << Json{{"error", "Internal"}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace trustlapse
