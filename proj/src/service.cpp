#include "trustlapse/service.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <fstream>

#include "trustlapse/error.hpp"
#include "trustlapse/service_json.hpp"

namespace trustlapse {

namespace {

bool valid_stream_id(const std::string& id) {
  if (id.empty() || id.size() > 128) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
  }) && id != "." && id != "..";
}

double nearest_rank_sorted(const std::vector<double>& sorted, double pct) {
  const double n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

}  // namespace

ServiceOptions service_options_from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    fail(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::InvalidConfig, "service config must be a JSON object");
  ServiceOptions o;
  try {
    o.w_a = j.value("w_a", o.w_a);
    o.w_b = j.value("w_b", o.w_b);
    o.alpha = j.value("alpha", o.alpha);
    if (j.contains("score_mode")) o.mode = parse_score_mode(j.at("score_mode").get<std::string>());
    o.bind_address = j.value("bind", o.bind_address);
    o.port = j.value("port", o.port);
    if (j.contains("history_dir")) o.history_dir = j.at("history_dir").get<std::string>();
    o.explain_horizon = j.value("explain_horizon", o.explain_horizon);
  } catch (const Json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("service config: ") + e.what());
  }
  if (o.port < 0 || o.port > 65535) fail(ErrorCode::InvalidConfig, "port out of range");
  return o;
}

SummaryStats summarize(std::vector<double> values) {
  SummaryStats s;
  s.count = values.size();
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(ss / static_cast<double>(values.size()));
  s.min = values.front();
  s.max = values.back();
  s.q05 = nearest_rank_sorted(values, 5.0);
  s.q25 = nearest_rank_sorted(values, 25.0);
  s.median = nearest_rank_sorted(values, 50.0);
  s.q75 = nearest_rank_sorted(values, 75.0);
  s.q95 = nearest_rank_sorted(values, 95.0);
  return s;
}

// ---------------------------------------------------------------- registry

ModelRegistry::ModelRegistry(CoresetModel initial) {
  const auto v = initial.version;
  models_.emplace(v, std::make_shared<const CoresetModel>(std::move(initial)));
  latest_ = v;
}

ModelPtr ModelRegistry::get(std::uint64_t version) const {
  std::shared_lock lock(mu_);
  const auto it = models_.find(version);
  if (it == models_.end()) fail(ErrorCode::UnknownVersion, "unknown model version " + std::to_string(version));
  return it->second;
}

ModelPtr ModelRegistry::latest() const {
  std::shared_lock lock(mu_);
  return models_.at(latest_);
}

std::vector<ModelInfo> ModelRegistry::list() const {
  std::shared_lock lock(mu_);
  std::vector<ModelInfo> out;
  for (const auto& [v, m] : models_) {
    ModelInfo info{v, std::nullopt, m->size(), m->dim, m->gaussians.size()};
    if (const auto p = parents_.find(v); p != parents_.end()) info.parent = p->second;
    out.push_back(info);
  }
  return out;
}

ModelPtr ModelRegistry::mutate(const std::vector<EmbeddingRecord>& add,
                               const std::vector<std::string>& remove,
                               std::optional<std::uint64_t> base) {
  std::lock_guard writer(writer_);
  const ModelPtr from = base ? get(*base) : latest();
  std::uint64_t next = 0;
  {
    std::shared_lock lock(mu_);
    next = models_.rbegin()->first + 1;
  }
  auto fitted = mutate_coreset(*from, add, remove);
  fitted.version = next;
  auto ptr = std::make_shared<const CoresetModel>(std::move(fitted));
  std::unique_lock lock(mu_);
  models_.emplace(next, ptr);
  parents_.emplace(next, from->version);
  latest_ = next;
  return ptr;
}

// ----------------------------------------------------------------- service

struct MonitorService::Session {
  std::string id;

  std::mutex ingest_mu;  // single logical writer
  ModelPtr model;
  StreamState state;
  bool custom_reference = false;
  std::ofstream log;

  mutable std::mutex history_mu;
  mutable std::condition_variable cv;
  std::vector<HistoryEntry> history;
  std::deque<std::pair<std::size_t, std::vector<double>>> recent;
  bool closed = false;
};

MonitorService::MonitorService(CoresetModel initial, ServiceOptions options)
    : options_(std::move(options)), registry_([&] {
        auto cfg = initial.config;
        cfg.w_a = options_.w_a;
        cfg.w_b = options_.w_b;
        cfg.alpha = options_.alpha;
        validate(cfg);
        if (cfg == initial.config) return std::move(initial);
        return build_model(initial.members, cfg, initial.version);
      }()) {
  if (options_.history_dir) std::filesystem::create_directories(*options_.history_dir);
}

MonitorService::~MonitorService() { shutdown(); }

void MonitorService::shutdown() {
  stopping_ = true;
  std::shared_lock lock(sessions_mu_);
  for (const auto& [id, s] : sessions_) {
    std::lock_guard h(s->history_mu);
    s->cv.notify_all();
  }
}

bool MonitorService::stopping() const { return stopping_; }

std::shared_ptr<MonitorService::Session> MonitorService::find(const std::string& stream_id) const {
  std::shared_lock lock(sessions_mu_);
  const auto it = sessions_.find(stream_id);
  if (it == sessions_.end()) fail(ErrorCode::UnknownStream, "unknown stream '" + stream_id + "'");
  return it->second;
}

ModelInfo MonitorService::info_of(const ModelPtr& model) const {
  for (const auto& info : registry_.list()) {
    if (info.version == model->version) return info;
  }
  return {model->version, std::nullopt, model->size(), model->dim, model->gaussians.size()};
}

SessionInfo MonitorService::create_stream(const std::string& stream_id,
                                          std::optional<std::uint64_t> version) {
  if (!valid_stream_id(stream_id)) {
    fail(ErrorCode::BadRequest, "stream id must be 1-128 characters of [A-Za-z0-9._-]");
  }
  const ModelPtr model = version ? registry_.get(*version) : registry_.latest();
  auto s = std::make_shared<Session>();
  s->id = stream_id;
  s->model = model;
  s->state = make_stream_state(stream_id, reference_scores_for(*model, options_.mode), options_.w_b,
                               options_.alpha);
  if (options_.history_dir) {
    const auto path = *options_.history_dir / (stream_id + ".jsonl");
    s->log.open(path, std::ios::app);
    if (!s->log) fail(ErrorCode::IoError, "cannot open history log " + path.string());
  }
  std::unique_lock lock(sessions_mu_);
  if (!sessions_.emplace(stream_id, s).second) {
    fail(ErrorCode::StreamExists, "stream '" + stream_id + "' already exists");
  }
  return {stream_id, model->version, 0, false, std::nullopt};
}

void MonitorService::delete_stream(const std::string& stream_id) {
  std::shared_ptr<Session> s;
  {
    std::unique_lock lock(sessions_mu_);
    const auto it = sessions_.find(stream_id);
    if (it == sessions_.end()) fail(ErrorCode::UnknownStream, "unknown stream '" + stream_id + "'");
    s = it->second;
    sessions_.erase(it);
  }
  std::lock_guard h(s->history_mu);
  s->closed = true;
  s->cv.notify_all();
}

SessionInfo MonitorService::session_info(const std::string& stream_id) const {
  const auto s = find(stream_id);
  std::lock_guard lock(s->ingest_mu);
  std::lock_guard h(s->history_mu);
  return {s->id, s->model->version, s->history.size(), s->custom_reference, s->state.seq_cursor};
}

std::vector<SessionInfo> MonitorService::streams() const {
  std::vector<std::string> ids;
  {
    std::shared_lock lock(sessions_mu_);
    for (const auto& [id, s] : sessions_) ids.push_back(id);
  }
  std::vector<SessionInfo> out;
  for (const auto& id : ids) {
    try {
      out.push_back(session_info(id));
    } catch (const Error&) {
      // deleted concurrently
    }
  }
  return out;
}

HistoryEntry MonitorService::ingest(const std::string& stream_id, const EmbeddingRecord& record,
                                    bool assign_seq) {
  const auto s = find(stream_id);
  std::lock_guard lock(s->ingest_mu);
  std::uint64_t seq = record.seq;
  if (assign_seq) {
    seq = s->state.seq_cursor ? *s->state.seq_cursor + 1 : 0;
  } else if (s->state.seq_cursor && seq <= *s->state.seq_cursor) {
    fail(ErrorCode::OutOfOrderSeq, "seq " + std::to_string(seq) + " is not after " +
                                       std::to_string(*s->state.seq_cursor));
  }
  validate_vector(record.vec, s->model->dim);

  HistoryEntry e;
  e.record_id = record.id;
  e.model_version = s->model->version;
  e.latent = latent_mistrust(*s->model, record.vec, options_.mode);
  e.sequential = step(s->state, e.latent.s_lss, seq);
  s->state.history.clear();  // the session keeps its own richer history

  {
    std::lock_guard h(s->history_mu);
    e.index = s->history.size();
    s->history.push_back(e);
    if (options_.explain_horizon > 0) {
      s->recent.emplace_back(e.index, record.vec);
      if (s->recent.size() > options_.explain_horizon) s->recent.pop_front();
    }
  }
  s->cv.notify_all();
  if (s->log.is_open()) {
    s->log << to_json(e, stream_id).dump() << '\n';
    s->log.flush();
  }
  return e;
}

std::vector<HistoryEntry> MonitorService::history(const std::string& stream_id, std::size_t offset,
                                                  std::size_t limit) const {
  const auto s = find(stream_id);
  std::lock_guard h(s->history_mu);
  if (offset >= s->history.size()) return {};
  const auto end = offset + std::min(limit, s->history.size() - offset);
  return {s->history.begin() + static_cast<std::ptrdiff_t>(offset),
          s->history.begin() + static_cast<std::ptrdiff_t>(end)};
}

std::vector<HistoryEntry> MonitorService::wait_history(const std::string& stream_id,
                                                       std::size_t from,
                                                       std::chrono::milliseconds timeout) const {
  const auto s = find(stream_id);
  std::unique_lock h(s->history_mu);
  s->cv.wait_for(h, timeout, [&] {
    return stopping_ || s->closed || s->history.size() > from;
  });
  if (from >= s->history.size()) return {};
  return {s->history.begin() + static_cast<std::ptrdiff_t>(from), s->history.end()};
}

DistributionSummary MonitorService::distribution(const std::string& stream_id, std::size_t offset,
                                                 std::size_t limit) const {
  const auto entries = history(stream_id, offset, limit);
  DistributionSummary d;
  d.offset = offset;
  d.count = entries.size();
  d.s_lss_histogram.assign(10, 0);
  std::vector<double> lss, z;
  for (const auto& e : entries) {
    lss.push_back(e.latent.s_lss);
    const auto bin = std::min<std::size_t>(9, static_cast<std::size_t>(e.latent.s_lss * 10.0));
    ++d.s_lss_histogram[bin];
    if (e.sequential.action == Action::Warmup) {
      ++d.warmup;
    } else {
      z.push_back(e.sequential.z);
    }
    if (e.sequential.action == Action::Flag) ++d.flags;
  }
  d.s_lss = summarize(std::move(lss));
  d.z = summarize(std::move(z));
  return d;
}

void MonitorService::set_reference_window(const std::string& stream_id, ReferenceSource source,
                                          const std::vector<double>& scores,
                                          const std::vector<std::string>& member_ids) {
  const auto s = find(stream_id);
  std::lock_guard lock(s->ingest_mu);
  const auto& model = *s->model;
  switch (source) {
    case ReferenceSource::Default:
      trustlapse::set_reference_window(s->state, reference_scores_for(model, options_.mode));
      s->custom_reference = false;
      return;
    case ReferenceSource::Scores:
      for (double x : scores) {
        if (!std::isfinite(x)) fail(ErrorCode::NonFiniteInput, "reference scores must be finite");
      }
      trustlapse::set_reference_window(s->state, scores);
      s->custom_reference = true;
      return;
    case ReferenceSource::Members: {
      std::vector<double> window;
      for (const auto& id : member_ids) {
        const auto it = std::find_if(model.members.begin(), model.members.end(),
                                     [&](const CoresetMember& m) { return m.id == id; });
        if (it == model.members.end()) fail(ErrorCode::UnknownMemberId, "unknown member '" + id + "'");
        const auto& ms = model.member_scores[static_cast<std::size_t>(it - model.members.begin())];
        window.push_back(combine_components(ms.d_norm, ms.sim_mistrust, options_.mode));
      }
      trustlapse::set_reference_window(s->state, std::move(window));
      s->custom_reference = true;
      return;
    }
  }
}

std::vector<double> MonitorService::reference_window(const std::string& stream_id) const {
  const auto s = find(stream_id);
  std::lock_guard lock(s->ingest_mu);
  return s->state.reference;
}

SessionInfo MonitorService::repin(const std::string& stream_id, std::uint64_t version) {
  const auto model = registry_.get(version);
  const auto s = find(stream_id);
  std::lock_guard lock(s->ingest_mu);
  if (model->dim != s->model->dim) fail(ErrorCode::DimensionMismatch, "model dimension differs");
  s->model = model;
  if (!s->custom_reference) {
    trustlapse::set_reference_window(s->state, reference_scores_for(*model, options_.mode));
  }
  std::lock_guard h(s->history_mu);
  return {s->id, model->version, s->history.size(), s->custom_reference, s->state.seq_cursor};
}

ModelInfo MonitorService::add_members(const std::vector<EmbeddingRecord>& records,
                                      std::optional<std::uint64_t> base) {
  return info_of(registry_.mutate(records, {}, base));
}

ModelInfo MonitorService::remove_members(const std::vector<std::string>& ids,
                                         std::optional<std::uint64_t> base) {
  return info_of(registry_.mutate({}, ids, base));
}

Explanation MonitorService::explain_entry(const std::string& stream_id,
                                          std::optional<std::size_t> index, std::size_t k) const {
  const auto s = find(stream_id);
  std::vector<double> vec;
  std::uint64_t version = 0;
  {
    std::lock_guard h(s->history_mu);
    if (s->history.empty()) fail(ErrorCode::EmptyWindow, "stream has no samples yet");
    const std::size_t want = index.value_or(s->history.size() - 1);
    if (want >= s->history.size()) fail(ErrorCode::BadRequest, "history index out of range");
    const auto it = std::find_if(s->recent.begin(), s->recent.end(),
                                 [&](const auto& p) { return p.first == want; });
    if (it == s->recent.end()) fail(ErrorCode::BadRequest, "vector for that entry is no longer retained");
    vec = it->second;
    version = s->history[want].model_version;
  }
  return explain(*registry_.get(version), vec, k);
}

Explanation MonitorService::explain_vector(const std::vector<double>& vec, std::size_t k,
                                           std::optional<std::uint64_t> version) const {
  const auto model = version ? registry_.get(*version) : registry_.latest();
  validate_vector(vec, model->dim);
  return explain(*model, vec, k);
}

}  // namespace trustlapse
