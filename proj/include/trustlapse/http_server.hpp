#pragma once

#include <memory>
#include <string>

#include "trustlapse/error.hpp"
#include "trustlapse/service.hpp"

namespace trustlapse {

// HTTP status for an error code (404 unknown entities, 409 conflicts, 422
// dimension mismatch, 400 otherwise).
int http_status(ErrorCode code) noexcept;

/// JSON-over-HTTP front end for a MonitorService, with a server-sent-event
/// score feed per stream.
class HttpServer {
 public:
  explicit HttpServer(MonitorService& service);
  ~HttpServer();

  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Port 0 picks an ephemeral port. Returns the bound port; throws IoError.
  int bind(const std::string& host, int port);
  void listen();  // blocks until stop()
  void start();   // listen() on a background thread
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace trustlapse
