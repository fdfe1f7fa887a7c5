#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#include "plantmon/ingest.hpp"
#include "plantmon/telemetry.hpp"
#include "temp_dir.hpp"

using namespace plantmon;
using namespace plantmon::telemetry;

namespace {

// Down for the first `down_for` sends, then stores everything.
class ScriptedTransport final : public Transport {
 public:
  explicit ScriptedTransport(int down_for = 0) : down_for_(down_for) {}
  SendResult send(const UploadRecord& rec) override {
    ++calls;
    if (calls <= down_for_) return {SendStatus::TransportDown, 0};
    stored.push_back(rec);
    return {SendStatus::Stored, stored.size()};
  }
  CommandPoll execute_command() override { return {true, std::nullopt}; }

  int calls = 0;
  std::vector<UploadRecord> stored;

 private:
  int down_for_;
};

class RecordingClock final : public Clock {
 public:
  Millis now() const override { return now_; }
  void sleep_for(Millis d) override {
    sleeps.push_back(d);
    now_ += d;
  }
  std::vector<Millis> sleeps;

 private:
  Millis now_{0};
};

CalibratedFrame sample_frame() {
  CalibratedFrame f;
  f.t = Millis{42'000};
  f.temp_c = 24.5;
  f.humidity_pct = 61;
  f.soil_moisture_pct = 72;
  f.water_level_cm = 30;
  f.nutrient_temp_c = 21;
  return f;
}

}  // namespace

TEST_CASE("make_fields: eight channel fields") {
  auto f = make_fields(sample_frame(), true, control::Mode::WaterCritical, 0.5);
  CHECK(*f[0] == 24.5);
  CHECK(*f[1] == 61);
  CHECK(*f[2] == 72);
  CHECK(*f[3] == 30);
  CHECK(*f[4] == 21);
  CHECK(*f[5] == 1.0);
  CHECK(*f[6] == kAlertLevelCritical);
  CHECK(*f[7] == 0.5);
  CHECK(alert_level(control::Mode::Fault) == kAlertLevelWarning);
  CHECK(alert_level(control::Mode::Irrigating) == kAlertLevelNormal);
}

TEST_CASE("UploadBuffer: overflow evicts the oldest record") {
  UploadBuffer buf(4096);
  EnqueueResult last = EnqueueResult::Ok;
  for (int i = 0; i < 4097; ++i) last = buf.enqueue(Millis{i}, {});
  CHECK(last == EnqueueResult::Overflow);
  CHECK(buf.size() == 4096);
  CHECK(buf.evictions() == 1);
  CHECK(buf.enqueued() == 4097);
  CHECK(buf.front()->seq == 2);
  CHECK_FALSE(buf.pop_front_if(1));
  CHECK(buf.pop_front_if(2));
}

TEST_CASE("UploadBuffer: sequence numbers continue after restore") {
  UploadBuffer buf(10, 1);
  buf.restore({50, Millis{0}, {}});
  buf.enqueue(Millis{1}, {});
  auto snap = buf.snapshot();
  REQUIRE(snap.size() == 2);
  CHECK(snap[1].seq == 51);
}

TEST_CASE("RetryPolicy: backoff doubles and is capped") {
  RetryPolicy p;
  CHECK(p.backoff(0) == Millis{1000});
  CHECK(p.backoff(1) == Millis{2000});
  CHECK(p.backoff(2) == Millis{4000});
  CHECK(p.backoff(5) == Millis{32'000});
  CHECK(p.backoff(6) == Millis{60'000});
  CHECK(p.backoff(40) == Millis{60'000});
}

TEST_CASE("flush: delivers everything in order when the service is up") {
  UploadBuffer buf;
  for (int i = 0; i < 3; ++i) buf.enqueue(Millis{i * 1000}, {});
  ScriptedTransport tr;
  RecordingClock clock;
  auto stats = flush(buf, tr, clock);
  CHECK(stats.completed);
  CHECK(stats.succeeded == 3);
  CHECK(stats.attempted == 3);
  CHECK(buf.empty());
  REQUIRE(tr.stored.size() == 3);
  CHECK(tr.stored[0].seq < tr.stored[1].seq);
  CHECK(clock.sleeps.empty());
}

TEST_CASE("flush: retries with backoff while the transport is down") {
  UploadBuffer buf;
  buf.enqueue(Millis{0}, {});
  ScriptedTransport tr(2);
  RecordingClock clock;
  auto stats = flush(buf, tr, clock);
  CHECK(stats.completed);
  CHECK(stats.attempted == 3);
  CHECK(stats.retried == 2);
  CHECK(stats.transport_down == 2);
  CHECK(clock.sleeps == std::vector<Millis>{Millis{1000}, Millis{2000}});
  CHECK(buf.empty());
}

TEST_CASE("flush: gives up after max_attempts and keeps the record") {
  UploadBuffer buf;
  buf.enqueue(Millis{0}, {});
  ScriptedTransport tr(100);
  RecordingClock clock;
  auto stats = flush(buf, tr, clock, {3, Millis{500}, Millis{800}});
  CHECK_FALSE(stats.completed);
  CHECK(stats.attempted == 3);
  CHECK(clock.sleeps == std::vector<Millis>{Millis{500}, Millis{800}});
  CHECK(buf.size() == 1);
}

TEST_CASE("journal: round trip and torn tail") {
  plantmon::testing::TempDir dir;
  const auto path = dir.path() / "buffer.csv";
  std::vector<UploadRecord> recs;
  for (int i = 0; i < 5; ++i) {
    UploadRecord r;
    r.seq = 10 + i;
    r.t = Millis{i * 15'000};
    r.fields = make_fields(sample_frame(), i % 2 == 0, control::Mode::Normal, 0.1);
    if (i == 3) r.fields[4].reset();
    recs.push_back(r);
  }
  append_journal(path, recs);
  CHECK(read_journal(path) == recs);
  {
    std::ofstream out(path, std::ios::app);
    out << "15,75000,1.5,2";  // interrupted write
  }
  CHECK(read_journal(path) == recs);
  CHECK(read_journal(dir.path() / "missing.csv").empty());
}

TEST_CASE("JournalTransport writes records to disk") {
  plantmon::testing::TempDir dir;
  JournalTransport tr(dir.path() / "j.csv");
  UploadBuffer buf;
  buf.enqueue(Millis{1}, make_fields(sample_frame(), false, control::Mode::Normal, 1.0));
  auto expected = buf.snapshot();
  VirtualClock clock;
  CHECK(flush(buf, tr, clock).completed);
  CHECK(read_journal(dir.path() / "j.csv") == expected);
}

TEST_CASE("FaultInjectingTransport: outages and lost responses") {
  ingest::IngestService service;
  service.create_channel(ingest::plant_channel(1, "w", "r"));
  ingest::InProcessTransport inner(service, 1, "w", Millis{0});
  VirtualClock clock;
  FaultInjectingTransport tr(inner, clock, {0.0, 0.5, {{Millis{1000}, Millis{2000}}}, 1});
  UploadRecord rec{1, Millis{0}, {}};
  rec.fields[0] = 1.0;
  CHECK(tr.send(rec).status == SendStatus::Stored);
  clock.set(Millis{1500});
  CHECK(tr.in_outage());
  CHECK(tr.send(rec).status == SendStatus::TransportDown);
  CHECK_FALSE(tr.execute_command().reachable);
  clock.set(Millis{2000});
  CHECK_FALSE(tr.in_outage());

  FaultInjectingTransport always(inner, clock, {1.0, 1.0, {}, 7});
  rec.seq = 2;
  CHECK(always.send(rec).status == SendStatus::TransportDown);
  CHECK(always.lost_responses() == 1);
  // The request reached the service even though the device saw a failure.
  CHECK(service.read_feed("r", 1).value.entries.size() == 2);
}

TEST_CASE("poll_commands: racing pollers receive each command exactly once") {
  ingest::IngestService service;
  service.create_channel(ingest::plant_channel(1, "w", "r"));
  constexpr int kCommands = 200;
  for (int i = 0; i < kCommands; ++i) service.enqueue_command("w", 1, {0, control::Verb::PumpOff, {}, {}});
  std::mutex mu;
  std::vector<std::uint64_t> seen;
  std::vector<std::thread> pollers;
  for (int p = 0; p < 4; ++p) {
    pollers.emplace_back([&] {
      ingest::InProcessTransport tr(service, 1, "w", Millis{0});
      for (;;) {
        auto cmds = poll_commands(tr, 3);
        if (cmds.empty()) return;
        std::lock_guard lock(mu);
        for (const auto& c : cmds) seen.push_back(c.id);
      }
    });
  }
  for (auto& t : pollers) t.join();
  CHECK(seen.size() == kCommands);
  CHECK(std::set<std::uint64_t>(seen.begin(), seen.end()).size() == kCommands);
}
