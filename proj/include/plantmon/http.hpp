#pragma once

// HTTP front end for IngestService plus the HTTP client pieces used by a
// live device (upload transport) and by alert webhooks.
//
//   GET|POST /update?api_key=&field1..field8=&seq=[&created_at=]
//   GET  /channels/<id>/feeds.json?api_key=&results=[&start=&end=]
//   GET  /channels/<id>/fields/<n>.json?api_key=&results=
//   POST /channels/<id>/commands?api_key=         body: command JSON
//   GET  /channels/<id>/commands/execute?api_key=
//   GET  /channels/<id>/export.csv?api_key=[&start=&end=]
//   GET  /channels/<id>/alerts.json?api_key=
//
// Payload schemas are in docs/api.md.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <utility>

#include "plantmon/ingest.hpp"
#include "plantmon/telemetry.hpp"

namespace plantmon::http {

// Default number of entries returned by the feed endpoints.
inline constexpr std::size_t kDefaultResults = 100;

// "host:port" or ":port" (binds all interfaces). Throws Error{Config}.
std::pair<std::string, int> parse_bind(std::string_view addr);

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;              // 0 picks a free port
  std::filesystem::path static_dir;  // served at / when set and present
};

class Server {
 public:
  Server(ingest::IngestService& service, ServerOptions opts);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds the socket and returns the bound port. Throws Error{Io}.
  int bind();
  // Serves until stop(); bind() is called first if needed.
  void listen();
  // listen() on a background thread; returns once the socket is bound.
  int start();
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  ServerOptions opts_;
  int port_ = 0;
};

// Device-side transport speaking the endpoints above. Run-relative record
// times are offset by `epoch` to form created_at.
class HttpTransport final : public telemetry::Transport {
 public:
  HttpTransport(std::string base_url, std::uint64_t channel_id, std::string write_key, UnixMillis epoch);
  ~HttpTransport() override;

  telemetry::SendResult send(const telemetry::UploadRecord& rec) override;
  telemetry::CommandPoll execute_command() override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::uint64_t channel_id_;
  std::string write_key_;
  UnixMillis epoch_;
};

// Alert sink that POSTs the alert JSON to a URL; 2xx counts as delivered.
class WebhookSink final : public ingest::AlertSink {
 public:
  explicit WebhookSink(std::string url);
  bool deliver(const AlertEvent& alert, const ingest::ChannelInfo& channel) override;

 private:
  std::string base_;
  std::string path_;
};

}  // namespace plantmon::http
