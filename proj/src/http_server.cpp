#include "trustlapse/http_server.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <list>
#include <thread>
#include <unordered_map>

#include "trustlapse/error.hpp"
#include "trustlapse/service_json.hpp"

namespace trustlapse {

int http_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::UnknownStream:
    case ErrorCode::UnknownVersion:
    case ErrorCode::UnknownMemberId: return 404;
    case ErrorCode::OutOfOrderSeq:
    case ErrorCode::StreamExists:
    case ErrorCode::DuplicateMemberId:
    case ErrorCode::EmptyCoresetAfterMutation: return 409;
    case ErrorCode::DimensionMismatch: return 422;
    default: return 400;
  }
}

namespace {

constexpr std::size_t kDefaultPage = 100;
constexpr std::size_t kMaxPage = 10000;
constexpr std::size_t kIdempotencyCapacity = 1024;

Json parse_body(const httplib::Request& req, bool allow_empty) {
  if (req.body.empty()) {
    if (allow_empty) return Json::object();
    fail(ErrorCode::BadRequest, "request body is required");
  }
  try {
    return Json::parse(req.body);
  } catch (const Json::parse_error& e) {
    fail(ErrorCode::MalformedJson, std::string("body: ") + e.what());
  }
}

std::size_t size_param(const httplib::Request& req, const char* key, std::size_t fallback) {
  if (!req.has_param(key)) return fallback;
  const auto text = req.get_param_value(key);
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    fail(ErrorCode::BadRequest, std::string("query parameter '") + key + "' must be a non-negative integer");
  }
}

std::optional<std::uint64_t> version_field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return std::nullopt;
  if (!j.at(key).is_number_unsigned()) {
    fail(ErrorCode::BadRequest, std::string("'") + key + "' must be a non-negative integer");
  }
  return j.at(key).get<std::uint64_t>();
}

std::vector<EmbeddingRecord> records_of(const Json& body) {
  const Json* arr = &body;
  if (body.is_object() && body.contains("records")) arr = &body.at("records");
  std::vector<EmbeddingRecord> out;
  if (arr->is_array()) {
    for (const auto& r : *arr) out.push_back(record_from_json(r));
  } else {
    out.push_back(record_from_json(*arr));
  }
  return out;
}

template <typename T>
std::vector<T> array_field(const Json& j, const char* key) {
  try {
    return j.at(key).get<std::vector<T>>();
  } catch (const Json::exception&) {
    fail(ErrorCode::BadRequest, std::string("'") + key + "' must be an array");
  }
}

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

// Replays the stored response for a repeated Idempotency-Key.
class IdempotencyCache {
 public:
  std::optional<std::pair<int, std::string>> lookup(const std::string& key) {
    std::lock_guard lock(mu_);
    const auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return it->second->second;
  }

  void store(const std::string& key, int status, std::string body) {
    std::lock_guard lock(mu_);
    if (index_.contains(key)) return;
    order_.emplace_back(key, std::make_pair(status, std::move(body)));
    index_.emplace(key, std::prev(order_.end()));
    if (order_.size() > kIdempotencyCapacity) {
      index_.erase(order_.front().first);
      order_.pop_front();
    }
  }

 private:
  using Item = std::pair<std::string, std::pair<int, std::string>>;
  std::mutex mu_;
  std::list<Item> order_;
  std::unordered_map<std::string, std::list<Item>::iterator> index_;
};

}  // namespace

struct HttpServer::Impl {
  MonitorService& service;
  httplib::Server server;
  std::thread thread;
  IdempotencyCache idempotency;

  explicit Impl(MonitorService& s) : service(s) { routes(); }

  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  // Error mapping plus Idempotency-Key replay for mutating requests.
  Handler wrap(Handler h, bool mutating) {
    return [this, h = std::move(h), mutating](const httplib::Request& req, httplib::Response& res) {
      std::string key;
      if (mutating && req.has_header("Idempotency-Key")) {
        key = req.method + " " + req.path + " " + req.get_header_value("Idempotency-Key");
        if (const auto hit = idempotency.lookup(key)) {
          res.status = hit->first;
          res.set_content(hit->second, "application/json");
          res.set_header("Idempotent-Replay", "true");
          return;
        }
      }
      try {
        h(req, res);
      } catch (const Error& e) {
        send_json(res, http_status(e.code()),
                  Json{{"error", to_string(e.code())}, {"message", e.what()}});
      } catch (const std::exception& e) {
        send_json(res, 500, Json{{"error", "Internal"}, {"message", e.what()}});
      }
      if (!key.empty() && res.status < 500) idempotency.store(key, res.status, res.body);
    };
  }

  void get(const std::string& pattern, Handler h) { server.Get(pattern, wrap(std::move(h), false)); }
  void post(const std::string& pattern, Handler h) { server.Post(pattern, wrap(std::move(h), true)); }
  void del(const std::string& pattern, Handler h) { server.Delete(pattern, wrap(std::move(h), true)); }

  void routes() {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    server.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type, Idempotency-Key, Last-Event-ID");
      res.status = 204;
    });
    server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
      spdlog::debug("{} {} -> {}", req.method, req.path, res.status);
    });

    get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, Json{{"status", "ok"}});
    });

    get("/v1/models", [this](const httplib::Request&, httplib::Response& res) {
      Json arr = Json::array();
      for (const auto& m : service.registry().list()) arr.push_back(to_json(m));
      send_json(res, 200, Json{{"latest", service.registry().latest()->version}, {"models", arr}});
    });

    get(R"(/v1/models/(\d+)/members)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto model = service.registry().get(std::stoull(req.matches[1]));
      Json arr = Json::array();
      for (std::size_t i = 0; i < model->size(); ++i) {
        const auto& m = model->members[i];
        arr.push_back(Json{{"id", m.id},
                           {"label", m.label},
                           {"member_trust", 1.0 - model->member_scores[i].s_lss}});
      }
      send_json(res, 200, Json{{"version", model->version}, {"members", arr}});
    });

    post("/v1/coreset/members", [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body(req, false);
      const auto info = service.add_members(records_of(body), version_field(body, "base_version"));
      send_json(res, 201, to_json(info));
    });

    del("/v1/coreset/members", [this](const httplib::Request& req, httplib::Response& res) {
      std::vector<std::string> ids;
      std::optional<std::uint64_t> base;
      if (!req.body.empty()) {
        const auto body = parse_body(req, false);
        ids = body.is_array() ? body.get<std::vector<std::string>>() : array_field<std::string>(body, "ids");
        base = version_field(body, "base_version");
      } else if (req.has_param("ids")) {
        std::stringstream ss(req.get_param_value("ids"));
        for (std::string id; std::getline(ss, id, ',');) {
          if (!id.empty()) ids.push_back(id);
        }
      }
      if (ids.empty()) fail(ErrorCode::BadRequest, "no member ids given");
      send_json(res, 200, to_json(service.remove_members(ids, base)));
    });

    post("/v1/explain", [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body(req, false);
      if (!body.is_object()) fail(ErrorCode::BadRequest, "body must be an object");
      const auto k = body.value("k", std::size_t{5});
      std::vector<double> vec;
      if (body.contains("id")) {
        vec = record_from_json(body).vec;
      } else {
        for (double x : array_field<double>(body, "vec")) vec.push_back(static_cast<float>(x));
      }
      const auto ex = service.explain_vector(vec, k, version_field(body, "model_version"));
      send_json(res, 200, to_json(ex, k));
    });

    get("/v1/streams", [this](const httplib::Request&, httplib::Response& res) {
      Json arr = Json::array();
      for (const auto& s : service.streams()) arr.push_back(to_json(s));
      send_json(res, 200, Json{{"streams", arr}});
    });

    post(R"(/v1/streams/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body(req, true);
      send_json(res, 201, to_json(service.create_stream(req.matches[1], version_field(body, "model_version"))));
    });

    get(R"(/v1/streams/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, 200, to_json(service.session_info(req.matches[1])));
    });

    del(R"(/v1/streams/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      service.delete_stream(req.matches[1]);
      send_json(res, 200, Json{{"deleted", std::string(req.matches[1])}});
    });

    post(R"(/v1/streams/([^/]+)/samples)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      const auto body = parse_body(req, false);
      const bool batch = body.is_array() || (body.is_object() && body.contains("records"));
      const Json& items = body.is_object() && body.contains("records") ? body.at("records") : body;
      Json out = Json::array();
      auto one = [&](const Json& item) {
        const auto rec = record_from_json(item);
        const bool assign = !(item.is_object() && item.contains("seq"));
        out.push_back(to_json(service.ingest(id, rec, assign), id));
      };
      if (items.is_array()) {
        for (const auto& item : items) one(item);
      } else {
        one(items);
      }
      send_json(res, 200, batch ? out : out.at(0));
    });

    get(R"(/v1/streams/([^/]+)/scores)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      const auto offset = size_param(req, "offset", 0);
      const auto limit = std::min(size_param(req, "limit", kDefaultPage), kMaxPage);
      const auto total = service.session_info(id).history;
      Json arr = Json::array();
      for (const auto& e : service.history(id, offset, limit)) arr.push_back(to_json(e, id));
      send_json(res, 200, Json{{"stream_id", id}, {"offset", offset}, {"total", total}, {"entries", arr}});
    });

    get(R"(/v1/streams/([^/]+)/distribution)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      auto offset = size_param(req, "offset", 0);
      auto limit = size_param(req, "limit", std::numeric_limits<std::size_t>::max());
      if (req.has_param("last")) {
        const auto total = service.session_info(id).history;
        limit = size_param(req, "last", 0);
        offset = total > limit ? total - limit : 0;
      }
      auto j = to_json(service.distribution(id, offset, limit));
      j["stream_id"] = id;
      send_json(res, 200, j);
    });

    get(R"(/v1/streams/([^/]+)/explain)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto k = size_param(req, "k", 5);
      std::optional<std::size_t> index;
      if (req.has_param("index")) index = size_param(req, "index", 0);
      send_json(res, 200, to_json(service.explain_entry(req.matches[1], index, k), k));
    });

    get(R"(/v1/streams/([^/]+)/reference-window)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      const auto info = service.session_info(id);
      send_json(res, 200, Json{{"stream_id", id},
                               {"custom", info.custom_reference},
                               {"scores", service.reference_window(id)}});
    });

    post(R"(/v1/streams/([^/]+)/reference-window)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      const auto body = parse_body(req, false);
      if (body.is_array()) {
        service.set_reference_window(id, ReferenceSource::Scores, array_field<double>(Json{{"s", body}}, "s"));
      } else if (body.is_object() && body.contains("scores")) {
        service.set_reference_window(id, ReferenceSource::Scores, array_field<double>(body, "scores"));
      } else if (body.is_object() && body.contains("member_ids")) {
        service.set_reference_window(id, ReferenceSource::Members, {},
                                     array_field<std::string>(body, "member_ids"));
      } else if (body.is_object() && body.value("default", false)) {
        service.set_reference_window(id, ReferenceSource::Default);
      } else {
        fail(ErrorCode::BadRequest, "expected 'scores', 'member_ids', or 'default': true");
      }
      const auto info = service.session_info(id);
      send_json(res, 200, Json{{"stream_id", id},
                               {"custom", info.custom_reference},
                               {"scores", service.reference_window(id)}});
    });

    post(R"(/v1/streams/([^/]+)/model-version)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body(req, false);
      auto version = version_field(body, "version");
      if (!version && body.is_number_unsigned()) version = body.get<std::uint64_t>();
      if (!version && body.is_object() && body.value("latest", false)) {
        version = service.registry().latest()->version;
      }
      if (!version) fail(ErrorCode::BadRequest, "expected 'version' or 'latest': true");
      send_json(res, 200, to_json(service.repin(req.matches[1], *version)));
    });

    server.Get(R"(/v1/streams/([^/]+)/feed)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      std::size_t from = 0;
      try {
        (void)service.session_info(id);
        from = size_param(req, "from", 0);
        if (req.has_header("Last-Event-ID")) {
          from = static_cast<std::size_t>(std::stoull(req.get_header_value("Last-Event-ID"))) + 1;
        }
      } catch (const Error& e) {
        send_json(res, http_status(e.code()), Json{{"error", to_string(e.code())}, {"message", e.what()}});
        return;
      } catch (const std::exception& e) {
        send_json(res, 400, Json{{"error", "BadRequest"}, {"message", e.what()}});
        return;
      }
      res.set_header("Cache-Control", "no-cache");
      auto cursor = std::make_shared<std::size_t>(from);
      res.set_chunked_content_provider(
          "text/event-stream", [this, id, cursor](std::size_t, httplib::DataSink& sink) {
            if (service.stopping()) return false;
            std::vector<HistoryEntry> batch;
            try {
              batch = service.wait_history(id, *cursor, std::chrono::milliseconds(500));
            } catch (const Error&) {
              return false;  // stream deleted
            }
            std::string chunk;
            for (const auto& e : batch) {
              chunk += "id: " + std::to_string(e.index) + "\nevent: score\ndata: " +
                       to_json(e, id).dump() + "\n\n";
            }
            if (chunk.empty()) chunk = ": keepalive\n\n";
            *cursor += batch.size();
            if (!sink.is_writable() || !sink.write(chunk.data(), chunk.size())) return false;
            return !service.stopping();
          });
    });
  }
};

HttpServer::HttpServer(MonitorService& service) : impl_(std::make_unique<Impl>(service)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host)
                              : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) fail(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::start() {
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->service.shutdown();
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace trustlapse
