#include <doctest.h>
#include <httplib.h>

#include <fstream>
#include <mutex>
#include <thread>

#include "plantmon/clock.hpp"
#include "plantmon/csv.hpp"
#include "plantmon/http.hpp"
#include "plantmon/wire.hpp"
#include "temp_dir.hpp"

using namespace plantmon;

namespace {

struct Fixture {
  ingest::IngestService service;
  http::Server server{service, {"127.0.0.1", 0, {}}};
  int port = 0;
  std::unique_ptr<httplib::Client> client;

  Fixture() {
    service.create_channel(ingest::plant_channel(1, "w", "r"), ingest::default_rules(Thresholds{}));
    port = server.start();
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
  }
  ~Fixture() { server.stop(); }

  std::string base() const { return "http://127.0.0.1:" + std::to_string(port); }
};

}  // namespace

TEST_CASE("parse_bind") {
  CHECK(http::parse_bind("127.0.0.1:8080") == std::pair<std::string, int>{"127.0.0.1", 8080});
  CHECK(http::parse_bind(":9000") == std::pair<std::string, int>{"0.0.0.0", 9000});
  CHECK_THROWS_AS(http::parse_bind("localhost"), Error);
  CHECK_THROWS_AS(http::parse_bind("h:99999"), Error);
  CHECK_THROWS_AS(http::parse_bind("h:x"), Error);
}

TEST_CASE("wire: command and feed round trips") {
  control::RemoteCommand cmd{4, control::Verb::SetThresholds, {55, 75, 4}, {}};
  CHECK(wire::command_from_json(wire::command_to_json(cmd)) == cmd);
  control::RemoteCommand ack{5, control::Verb::AckAlert, {}, 17};
  CHECK(wire::command_from_json(wire::command_to_json(ack)) == ack);
  CHECK_THROWS_AS(wire::command_from_json("{\"verb\":\"Dance\"}"), Error);
  CHECK_THROWS_AS(wire::command_from_json("not json"), Error);

  ingest::Feed feed;
  feed.channel = ingest::plant_channel(3, "w", "r");
  feed.channel.created_at = Millis{1'748'736'000'000};
  feed.last_entry_id = 2;
  for (std::uint64_t i = 1; i <= 2; ++i) {
    ingest::ChannelEntry e;
    e.entry_id = i;
    e.created_at = Millis{1'748'736'000'000 + static_cast<std::int64_t>(i) * 15'000};
    e.fields[0] = 24.25;
    e.fields[2] = 0.1 + static_cast<double>(i);
    feed.entries.push_back(e);
  }
  auto back = wire::feed_from_json(wire::feed_to_json(feed));
  CHECK(back.channel.id == 3);
  CHECK(back.last_entry_id == 2);
  REQUIRE(back.entries.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back.entries[i].entry_id == feed.entries[i].entry_id);
    CHECK(back.entries[i].created_at == feed.entries[i].created_at);
    CHECK(back.entries[i].fields == feed.entries[i].fields);
  }
}

TEST_CASE("http: update, feed and CSV export agree") {
  Fixture fx;
  for (int i = 0; i < 5; ++i) {
    auto res = fx.client->Get("/update?api_key=w&field1=24.5&field3=" + std::to_string(70 + i) +
                              "&field4=30&seq=" + std::to_string(i) + "&created_at=2025-06-01T00:00:" +
                              std::to_string(10 + i * 15 % 50) + "Z");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->body == std::to_string(i + 1));
  }
  auto dup = fx.client->Get("/update?api_key=w&field3=1&seq=2");
  REQUIRE(dup);
  CHECK(dup->body == "3");
  auto bad_key = fx.client->Get("/update?api_key=nope&field1=1");
  REQUIRE(bad_key);
  CHECK(bad_key->body == "0");
  auto bad_field = fx.client->Get("/update?api_key=w&field1=abc");
  REQUIRE(bad_field);
  CHECK(bad_field->status == 400);
  auto post = fx.client->Post("/update", "api_key=w&field1=20&seq=99", "application/x-www-form-urlencoded");
  REQUIRE(post);
  CHECK(post->body == "6");

  auto feed_res = fx.client->Get("/channels/1/feeds.json?api_key=r");
  REQUIRE(feed_res);
  CHECK(feed_res->status == 200);
  CHECK(feed_res->get_header_value("Access-Control-Allow-Origin") == "*");
  const auto feed = wire::feed_from_json(feed_res->body);
  REQUIRE(feed.entries.size() == 6);
  auto expected = fx.service.read_feed("r", 1).value.entries;
  for (auto& e : expected) e.client_seq.reset();  // not part of the public document
  CHECK(feed.entries == expected);

  auto csv_res = fx.client->Get("/channels/1/export.csv?api_key=r");
  REQUIRE(csv_res);
  CHECK(csv_res->status == 200);
  const auto rows = csv::parse(csv_res->body);
  REQUIRE(rows.size() == feed.entries.size() + 1);
  for (std::size_t i = 0; i < feed.entries.size(); ++i) {
    CHECK(std::stoull(rows[i + 1][0]) == feed.entries[i].entry_id);
    CHECK(parse_iso8601(rows[i + 1][1]) == feed.entries[i].created_at);
    for (std::size_t k = 0; k < 8; ++k) CHECK(csv::parse_number(rows[i + 1][2 + k]) == feed.entries[i].fields[k]);
  }

  auto tail = wire::feed_from_json(fx.client->Get("/channels/1/feeds.json?api_key=r&results=2")->body);
  CHECK(tail.entries.size() == 2);
  auto field = fx.client->Get("/channels/1/fields/3.json?api_key=r&results=1");
  REQUIRE(field);
  CHECK(field->status == 200);
  CHECK(field->body.find("field1") == std::string::npos);
  CHECK(fx.client->Get("/channels/1/feeds.json?api_key=w")->status == 401);
  CHECK(fx.client->Get("/channels/7/feeds.json?api_key=r")->status == 404);
  CHECK(fx.client->Get("/channels/1/feeds.json?api_key=r&results=x")->status == 400);
}

TEST_CASE("http: command queue and alerts") {
  Fixture fx;
  for (auto verb : {"PumpOn", "PumpOff"}) {
    auto res = fx.client->Post("/channels/1/commands?api_key=w", std::string(R"({"verb":")") + verb + "\"}",
                               "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
  }
  CHECK(fx.client->Post("/channels/1/commands?api_key=w", "{}", "application/json")->status == 400);
  CHECK(fx.client->Post("/channels/1/commands?api_key=r", R"({"verb":"PumpOn"})", "application/json")->status == 401);

  http::HttpTransport device(fx.base(), 1, "w", Millis{1'748'736'000'000});
  auto cmds = telemetry::poll_commands(device);
  REQUIRE(cmds.size() == 2);
  CHECK(cmds[0].verb == control::Verb::PumpOn);
  CHECK(cmds[1].verb == control::Verb::PumpOff);
  CHECK(cmds[0].id < cmds[1].id);

  telemetry::UploadBuffer buf;
  telemetry::FieldSet low{};
  low[2] = 50.0;
  low[3] = 2.0;
  buf.enqueue(Millis{0}, low);
  VirtualClock clock;
  CHECK(telemetry::flush(buf, device, clock).completed);
  auto res = fx.client->Get("/channels/1/alerts.json?api_key=r");
  REQUIRE(res);
  auto log = wire::alerts_from_json(res->body);
  CHECK(log.alerts.size() == 2);
  CHECK(log.deliveries.size() == 2);
  CHECK(fx.service.read_feed("r", 1).value.entries[0].created_at == Millis{1'748'736'000'000});
}

TEST_CASE("http: device transport reports an unreachable service as down") {
  int port = 0;
  {
    ingest::IngestService s;
    http::Server probe(s, {"127.0.0.1", 0, {}});
    port = probe.bind();
  }
  http::HttpTransport device("http://127.0.0.1:" + std::to_string(port), 1, "w", Millis{0});
  CHECK(device.send({1, Millis{0}, {}}).status == telemetry::SendStatus::TransportDown);
  CHECK_FALSE(device.execute_command().reachable);
}

TEST_CASE("http: webhook sink posts alerts") {
  httplib::Server hook;
  std::vector<std::string> bodies;
  std::mutex mu;
  hook.Post("/hook", [&](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(mu);
    bodies.push_back(req.body);
    res.status = 204;
  });
  const int port = hook.bind_to_any_port("127.0.0.1");
  std::thread t([&] { hook.listen_after_bind(); });
  hook.wait_until_ready();

  http::WebhookSink sink("http://127.0.0.1:" + std::to_string(port) + "/hook");
  AlertEvent ev;
  ev.id = 9;
  ev.kind = AlertKind::WaterCritical;
  ev.payload = "water level 2.0 cm";
  CHECK(sink.deliver(ev, ingest::plant_channel(1, "w", "r")));
  http::WebhookSink missing("http://127.0.0.1:" + std::to_string(port) + "/nope");
  CHECK_FALSE(missing.deliver(ev, ingest::plant_channel(1, "w", "r")));
  hook.stop();
  t.join();
  REQUIRE(bodies.size() == 1);
  CHECK(bodies[0].find("water level 2.0 cm") != std::string::npos);
}

TEST_CASE("http: static files are served when the directory exists") {
  plantmon::testing::TempDir dir;
  {
    std::ofstream out(dir.path() / "index.html");
    out << "<html>dash</html>";
  }
  ingest::IngestService s;
  http::Server server(s, {"127.0.0.1", 0, dir.path()});
  const int port = server.start();
  httplib::Client c("127.0.0.1", port);
  auto res = c.Get("/index.html");
  REQUIRE(res);
  CHECK(res->body == "<html>dash</html>");
  server.stop();
}
