#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "trustlapse/coreset.hpp"
#include "trustlapse/latent_score.hpp"
#include "trustlapse/sequential.hpp"

namespace trustlapse {

struct ServiceOptions {
  std::size_t w_a = 25;
  std::size_t w_b = 25;
  double alpha = 0.05;
  ScoreMode mode = ScoreMode::Combined;
  std::string bind_address = "127.0.0.1";
  int port = 8080;
  std::optional<std::filesystem::path> history_dir;  // one append-only JSONL log per stream
  std::size_t explain_horizon = 4096;                 // recent vectors kept per stream
};

// Keys: w_a, w_b, alpha, score_mode, bind, port, history_dir, explain_horizon.
ServiceOptions service_options_from_file(const std::filesystem::path& path);

struct ModelInfo {
  std::uint64_t version = 0;
  std::optional<std::uint64_t> parent;
  std::size_t members = 0;
  std::size_t dim = 0;
  std::size_t classes = 0;
};

/// Immutable model snapshots keyed by version. Writers are serialized;
/// readers take shared snapshots.
class ModelRegistry {
 public:
  explicit ModelRegistry(CoresetModel initial);

  ModelPtr get(std::uint64_t version) const;  // throws UnknownVersion
  ModelPtr latest() const;
  std::vector<ModelInfo> list() const;

  // Applies the edit to `base` (latest when absent) and registers the result.
  ModelPtr mutate(const std::vector<EmbeddingRecord>& add, const std::vector<std::string>& remove,
                  std::optional<std::uint64_t> base = std::nullopt);

 private:
  mutable std::shared_mutex mu_;
  std::mutex writer_;
  std::map<std::uint64_t, ModelPtr> models_;
  std::map<std::uint64_t, std::uint64_t> parents_;
  std::uint64_t latest_ = 0;
};

struct HistoryEntry {
  std::size_t index = 0;  // position in the session history
  std::string record_id;
  std::uint64_t model_version = 0;
  LatentScore latent;
  SequentialScore sequential;
};

struct SessionInfo {
  std::string stream_id;
  std::uint64_t model_version = 0;
  std::size_t history = 0;
  bool custom_reference = false;
  std::optional<std::uint64_t> seq_cursor;
};

struct SummaryStats {
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;
  double min = 0.0;
  double q05 = 0.0;
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
  double q95 = 0.0;
  double max = 0.0;
};

// Nearest-rank quantiles; empty input gives count 0 and zeros.
SummaryStats summarize(std::vector<double> values);

struct DistributionSummary {
  std::size_t offset = 0;
  std::size_t count = 0;
  SummaryStats s_lss;
  SummaryStats z;             // non-warmup entries only
  std::vector<std::size_t> s_lss_histogram;  // 10 equal bins over [0, 1]
  std::size_t flags = 0;
  std::size_t warmup = 0;
};

enum class ReferenceSource { Default, Scores, Members };

/// Live scoring sessions over pinned model versions.
class MonitorService {
 public:
  MonitorService(CoresetModel initial, ServiceOptions options = {});
  ~MonitorService();

  MonitorService(const MonitorService&) = delete;
  MonitorService& operator=(const MonitorService&) = delete;

  const ServiceOptions& options() const noexcept { return options_; }
  ModelRegistry& registry() noexcept { return registry_; }

  SessionInfo create_stream(const std::string& stream_id,
                            std::optional<std::uint64_t> version = std::nullopt);
  void delete_stream(const std::string& stream_id);
  std::vector<SessionInfo> streams() const;
  SessionInfo session_info(const std::string& stream_id) const;

  // Seq must exceed the last processed one; with assign_seq the record's seq
  // is replaced by last + 1 (0 for a fresh stream).
  HistoryEntry ingest(const std::string& stream_id, const EmbeddingRecord& record,
                      bool assign_seq = false);

  std::vector<HistoryEntry> history(const std::string& stream_id, std::size_t offset,
                                    std::size_t limit) const;

  // Blocks until the history holds more than `from` entries, the timeout
  // expires, or the service shuts down; returns entries from `from` on.
  std::vector<HistoryEntry> wait_history(const std::string& stream_id, std::size_t from,
                                         std::chrono::milliseconds timeout) const;

  DistributionSummary distribution(const std::string& stream_id, std::size_t offset,
                                   std::size_t limit) const;

  // Scores: exactly w_a values. Members: ids of the pinned model whose
  // held-out scores form the window. Default: the pinned model's window.
  void set_reference_window(const std::string& stream_id, ReferenceSource source,
                            const std::vector<double>& scores = {},
                            const std::vector<std::string>& member_ids = {});
  std::vector<double> reference_window(const std::string& stream_id) const;

  // Later samples score against `version`; the trailing buffer is kept. A
  // default reference follows the new version, a custom one stays.
  SessionInfo repin(const std::string& stream_id, std::uint64_t version);

  ModelInfo add_members(const std::vector<EmbeddingRecord>& records,
                        std::optional<std::uint64_t> base = std::nullopt);
  ModelInfo remove_members(const std::vector<std::string>& ids,
                           std::optional<std::uint64_t> base = std::nullopt);

  // Explanation of a retained history entry (latest when index is absent).
  Explanation explain_entry(const std::string& stream_id, std::optional<std::size_t> index,
                            std::size_t k) const;
  // Explanation of an arbitrary vector against a version (latest when absent).
  Explanation explain_vector(const std::vector<double>& vec, std::size_t k,
                             std::optional<std::uint64_t> version = std::nullopt) const;

  // Wakes feed waiters and makes further waits return immediately.
  void shutdown();
  bool stopping() const;

 private:
  struct Session;

  std::shared_ptr<Session> find(const std::string& stream_id) const;
  ModelInfo info_of(const ModelPtr& model) const;

  ServiceOptions options_;
  ModelRegistry registry_;
  mutable std::shared_mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::atomic<bool> stopping_{false};
};

}  // namespace trustlapse
