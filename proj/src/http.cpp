#include "plantmon/http.hpp"

#include <httplib.h>

#include <charconv>
#include <thread>

#include "plantmon/csv.hpp"
#include "plantmon/wire.hpp"
#include "wire_json.hpp"

namespace plantmon::http {

using ingest::Status;
using telemetry::kFieldCount;

std::pair<std::string, int> parse_bind(std::string_view addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string_view::npos) throw Error(ErrorCode::Config, "bind address must be host:port");
  std::string host(addr.substr(0, colon));
  if (host.empty()) host = "0.0.0.0";
  const auto port_text = addr.substr(colon + 1);
  int port = -1;
  auto [p, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc{} || p != port_text.data() + port_text.size() || port < 0 || port > 65535)
    throw Error(ErrorCode::Config, "bad port in bind address '" + std::string(addr) + "'");
  return {host, port};
}

namespace {

struct BadRequest {
  std::string what;
};

std::optional<std::uint64_t> parse_u64(std::string_view s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<std::string> param(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  return req.get_param_value(key);
}

std::optional<UnixMillis> time_param(const httplib::Request& req, const char* key) {
  auto v = param(req, key);
  if (!v) return std::nullopt;
  auto t = parse_iso8601(*v);
  if (!t) throw BadRequest{std::string("bad ") + key};
  return t;
}

ingest::FeedQuery feed_query(const httplib::Request& req, std::optional<std::size_t> default_results) {
  ingest::FeedQuery q;
  q.results = default_results;
  if (auto r = param(req, "results")) {
    auto n = parse_u64(*r);
    if (!n) throw BadRequest{"bad results"};
    q.results = static_cast<std::size_t>(*n);
  }
  q.start = time_param(req, "start");
  q.end = time_param(req, "end");
  return q;
}

std::uint64_t channel_id(const httplib::Request& req) {
  auto id = parse_u64(req.matches[1].str());
  if (!id) throw BadRequest{"bad channel id"};
  return *id;
}

std::string api_key(const httplib::Request& req) { return param(req, "api_key").value_or(""); }

void status_reply(httplib::Response& res, Status s) {
  switch (s) {
    case Status::Ok: res.status = 200; return;
    case Status::Unauthorized: res.status = 401; break;
    case Status::NotFound: res.status = 404; break;
    case Status::BadRequest: res.status = 400; break;
  }
  res.set_content(std::string(R"({"error":")") + (s == Status::Unauthorized ? "unauthorized" :
                  s == Status::NotFound ? "not found" : "bad request") + "\"}", "application/json");
}

// Wraps a handler so BadRequest and protocol errors become 400 responses.
template <class F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const BadRequest& e) {
      res.status = 400;
      res.set_content(wire::json{{"error", e.what}}.dump(), "application/json");
    } catch (const Error& e) {
      res.status = e.code() == ErrorCode::Protocol ? 400 : 500;
      res.set_content(wire::json{{"error", e.what()}}.dump(), "application/json");
    }
  };
}

}  // namespace

struct Server::Impl {
  httplib::Server server;
  std::thread thread;
  bool bound = false;
  bool served = false;
};

Server::Server(ingest::IngestService& service, ServerOptions opts)
    : impl_(std::make_unique<Impl>()), opts_(std::move(opts)) {
  auto& srv = impl_->server;
  ingest::IngestService* svc = &service;

  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"}});

  auto update = guarded([svc](const httplib::Request& req, httplib::Response& res) {
    telemetry::FieldSet fields{};
    for (std::size_t i = 0; i < kFieldCount; ++i) {
      const std::string key = "field" + std::to_string(i + 1);
      auto v = param(req, key.c_str());
      if (!v || v->empty()) continue;
      auto x = csv::parse_number(*v);
      if (!x) throw BadRequest{"bad " + key};
      fields[i] = *x;
    }
    std::optional<std::uint64_t> seq;
    if (auto s = param(req, "seq")) {
      seq = parse_u64(*s);
      if (!seq) throw BadRequest{"bad seq"};
    }
    const auto id = svc->update(api_key(req), fields, seq, time_param(req, "created_at"));
    res.set_content(std::to_string(id), "text/plain");
  });
  srv.Get("/update", update);
  srv.Post("/update", update);

  srv.Get(R"(/channels/(\d+)/feeds\.json)", guarded([svc](const httplib::Request& req, httplib::Response& res) {
            auto r = svc->read_feed(api_key(req), channel_id(req), feed_query(req, kDefaultResults));
            if (!r.ok()) return status_reply(res, r.status);
            res.set_content(wire::feed_to_json(r.value), "application/json");
          }));

  srv.Get(R"(/channels/(\d+)/fields/(\d+)\.json)", guarded([svc](const httplib::Request& req, httplib::Response& res) {
            auto n = parse_u64(req.matches[2].str());
            if (!n || *n < 1 || *n > kFieldCount) throw BadRequest{"field index must be 1..8"};
            auto r = svc->read_feed(api_key(req), channel_id(req), feed_query(req, kDefaultResults));
            if (!r.ok()) return status_reply(res, r.status);
            res.set_content(wire::feed_to_json(r.value, static_cast<int>(*n)), "application/json");
          }));

  srv.Post(R"(/channels/(\d+)/commands)", guarded([svc](const httplib::Request& req, httplib::Response& res) {
             auto cmd = wire::command_from_json(req.body);
             if (cmd.verb == control::Verb::SetThresholds && threshold_violation(cmd.thresholds))
               throw BadRequest{"invalid thresholds: " + *threshold_violation(cmd.thresholds)};
             auto r = svc->enqueue_command(api_key(req), channel_id(req), cmd);
             if (!r.ok()) return status_reply(res, r.status);
             res.set_content(std::to_string(r.value), "text/plain");
           }));

  srv.Get(R"(/channels/(\d+)/commands/execute)", guarded([svc](const httplib::Request& req, httplib::Response& res) {
            auto r = svc->execute_command(api_key(req), channel_id(req));
            if (!r.ok()) return status_reply(res, r.status);
            res.set_content(r.value ? wire::command_to_json(*r.value) : std::string{}, "application/json");
          }));

  srv.Get(R"(/channels/(\d+)/export\.csv)", guarded([svc](const httplib::Request& req, httplib::Response& res) {
            auto r = svc->export_csv(api_key(req), channel_id(req), feed_query(req, std::nullopt));
            if (!r.ok()) return status_reply(res, r.status);
            res.set_header("Content-Disposition", "attachment; filename=\"export.csv\"");
            res.set_content(r.value, "text/csv");
          }));

  srv.Get(R"(/channels/(\d+)/alerts\.json)", guarded([svc](const httplib::Request& req, httplib::Response& res) {
            auto r = svc->alerts(api_key(req), channel_id(req));
            if (!r.ok()) return status_reply(res, r.status);
            res.set_content(wire::alerts_to_json(r.value), "application/json");
          }));

  if (!opts_.static_dir.empty() && std::filesystem::is_directory(opts_.static_dir))
    srv.set_mount_point("/", opts_.static_dir.string());
}

Server::~Server() { stop(); }

int Server::bind() {
  if (impl_->bound) return port_;
  if (opts_.port == 0) {
    port_ = impl_->server.bind_to_any_port(opts_.host);
    if (port_ < 0) throw Error(ErrorCode::Io, "cannot bind " + opts_.host);
  } else {
    if (!impl_->server.bind_to_port(opts_.host, opts_.port))
      throw Error(ErrorCode::Io, "cannot bind " + opts_.host + ":" + std::to_string(opts_.port));
    port_ = opts_.port;
  }
  impl_->bound = true;
  return port_;
}

void Server::listen() {
  bind();
  impl_->served = true;
  impl_->server.listen_after_bind();
}

int Server::start() {
  bind();
  impl_->served = true;
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void Server::stop() {
  if (!impl_) return;
  if (impl_->bound && !impl_->served) {
    // The listening socket is only closed by a running accept loop.
    start();
  }
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

// ---- client side -----------------------------------------------------------

struct HttpTransport::Impl {
  explicit Impl(const std::string& url) : client(url) {
    client.set_connection_timeout(2, 0);
    client.set_read_timeout(5, 0);
    client.set_write_timeout(5, 0);
  }
  httplib::Client client;
};

HttpTransport::HttpTransport(std::string base_url, std::uint64_t channel_id, std::string write_key, UnixMillis epoch)
    : impl_(std::make_unique<Impl>(base_url)), channel_id_(channel_id), write_key_(std::move(write_key)),
      epoch_(epoch) {}

HttpTransport::~HttpTransport() = default;

telemetry::SendResult HttpTransport::send(const telemetry::UploadRecord& rec) {
  httplib::Params params{{"api_key", write_key_}, {"seq", std::to_string(rec.seq)},
                         {"created_at", format_iso8601(epoch_ + rec.t)}};
  for (std::size_t i = 0; i < kFieldCount; ++i)
    if (rec.fields[i]) params.emplace("field" + std::to_string(i + 1), csv::format_number(*rec.fields[i]));
  auto res = impl_->client.Get(httplib::append_query_params("/update", params));
  if (!res) return {telemetry::SendStatus::TransportDown, 0};
  if (res->status != 200) return {telemetry::SendStatus::Rejected, 0};
  auto id = parse_u64(res->body);
  if (!id || *id == 0) return {telemetry::SendStatus::Rejected, 0};
  return {telemetry::SendStatus::Stored, *id};
}

telemetry::CommandPoll HttpTransport::execute_command() {
  auto res = impl_->client.Get("/channels/" + std::to_string(channel_id_) +
                               "/commands/execute?api_key=" + httplib::detail::encode_query_param(write_key_));
  if (!res || res->status != 200) return {false, std::nullopt};
  if (res->body.empty()) return {true, std::nullopt};
  try {
    return {true, wire::command_from_json(res->body)};
  } catch (const Error&) {
    return {true, std::nullopt};
  }
}

WebhookSink::WebhookSink(std::string url) {
  // split "scheme://host:port/path"
  const auto scheme = url.find("://");
  const auto slash = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  base_ = slash == std::string::npos ? url : url.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : url.substr(slash);
}

bool WebhookSink::deliver(const AlertEvent& alert, const ingest::ChannelInfo& channel) {
  httplib::Client client(base_);
  client.set_connection_timeout(2, 0);
  client.set_read_timeout(5, 0);
  wire::json body = wire::to_json(alert);
  body["channel_id"] = channel.id;
  auto res = client.Post(path_, body.dump(), "application/json");
  return res && res->status >= 200 && res->status < 300;
}

}  // namespace plantmon::http
