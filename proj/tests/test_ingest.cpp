#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "plantmon/clock.hpp"
#include "plantmon/csv.hpp"
#include "plantmon/ingest.hpp"
#include "temp_dir.hpp"

using namespace plantmon;
using namespace plantmon::ingest;

namespace {

FieldSet soil_water(double soil, double water) {
  FieldSet f{};
  f[2] = soil;
  f[3] = water;
  return f;
}

ChannelEntry entry_with(int field, double v) {
  ChannelEntry e;
  e.fields[static_cast<std::size_t>(field - 1)] = v;
  return e;
}

// Rejects every delivery.
class BrokenSink final : public AlertSink {
 public:
  bool deliver(const AlertEvent&, const ChannelInfo&) override {
    ++calls;
    return false;
  }
  int calls = 0;
};

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("evaluate_rules: edge-triggered with re-arm") {
  RuleBook book;
  book.add({1, "water", 4, Comparator::Less, 5.0, AlertKind::WaterCritical, Severity::Critical, AlertChannel::SmsLike,
            0.0});
  int fired = 0;
  for (double v : {6.0, 4.0, 4.0, 6.0, 4.0}) fired += static_cast<int>(evaluate_rules(book, entry_with(4, v)).size());
  CHECK(fired == 2);
}

TEST_CASE("evaluate_rules: re-arm gap and Greater comparator") {
  RuleBook book;
  book.add({1, "hot", 1, Comparator::Greater, 30.0, AlertKind::SensorFault, Severity::Warning,
            AlertChannel::EmailLike, 2.0});
  int fired = 0;
  for (double v : {31.0, 29.0, 31.0, 27.5, 31.0}) fired += static_cast<int>(evaluate_rules(book, entry_with(1, v)).size());
  CHECK(fired == 2);
  // Absent field leaves the rule untouched.
  CHECK(evaluate_rules(book, ChannelEntry{}).empty());
}

TEST_CASE("default rules: soil below low raises one email alert") {
  RuleBook book;
  for (auto& r : default_rules(Thresholds{})) book.add(r);
  auto fired = evaluate_rules(book, entry_with(3, 55.0));
  REQUIRE(fired.size() == 1);
  CHECK(fired[0].event.kind == AlertKind::SoilCritical);
  CHECK(fired[0].event.channel == AlertChannel::EmailLike);
  CHECK(fired[0].event.payload.find("55") != std::string::npos);
  CHECK(evaluate_rules(book, entry_with(3, 50.0)).empty());
  CHECK(evaluate_rules(book, entry_with(3, 79.0)).empty());  // inside the band: still disarmed
  CHECK(evaluate_rules(book, entry_with(3, 80.0)).empty());  // re-arms
  CHECK(evaluate_rules(book, entry_with(3, 59.0)).size() == 1);
}

TEST_CASE("service: auth, create and feed") {
  IngestService s;
  s.create_channel(plant_channel(1, "w", "r"), default_rules(Thresholds{}));
  CHECK_THROWS_AS(s.create_channel(plant_channel(1, "w2", "r2")), Error);
  CHECK_THROWS_AS(s.create_channel(plant_channel(2, "same", "same")), Error);

  CHECK(s.update("bad", soil_water(70, 30)) == 0);
  CHECK(s.update("", soil_water(70, 30)) == 0);
  CHECK(s.update("w", soil_water(70, 30), 1, Millis{1000}) == 1);
  CHECK(s.update("w", soil_water(71, 30), 2, Millis{2000}) == 2);
  CHECK(s.read_feed("w", 1).status == Status::Unauthorized);
  CHECK(s.read_feed("r", 9).status == Status::NotFound);
  auto feed = s.read_feed("r", 1);
  REQUIRE(feed.ok());
  CHECK(feed.value.last_entry_id == 2);
  CHECK(feed.value.entries.size() == 2);
  CHECK(feed.value.channel.field_labels[2].find("Soil") != std::string::npos);
}

TEST_CASE("service: duplicate client_seq returns the existing entry") {
  IngestService s;
  s.create_channel(plant_channel(1, "w", "r"));
  const auto a = s.update("w", soil_water(70, 30), 7, Millis{1000});
  CHECK(s.update("w", soil_water(99, 99), 7, Millis{5000}) == a);
  auto feed = s.read_feed("r", 1).value;
  REQUIRE(feed.entries.size() == 1);
  CHECK(*feed.entries[0].fields[2] == 70);
}

TEST_CASE("service: feed tail, zero results and time range") {
  IngestService s;
  s.create_channel(plant_channel(1, "w", "r"));
  for (int i = 1; i <= 10; ++i) s.update("w", soil_water(i, 30), i, Millis{i * 1000});
  auto tail = s.read_feed("r", 1, {3, {}, {}}).value.entries;
  REQUIRE(tail.size() == 3);
  CHECK(tail.front().entry_id == 8);
  CHECK(tail.back().entry_id == 10);
  CHECK(s.read_feed("r", 1, {0, {}, {}}).value.entries.empty());
  auto range = s.read_feed("r", 1, {{}, Millis{3000}, Millis{5000}}).value.entries;
  REQUIRE(range.size() == 3);
  CHECK(range.front().entry_id == 3);
  auto both = s.read_feed("r", 1, {2, Millis{3000}, Millis{8000}}).value.entries;
  REQUIRE(both.size() == 2);
  CHECK(both.front().entry_id == 7);
}

TEST_CASE("service: commands are delivered first in, first out") {
  IngestService s;
  s.create_channel(plant_channel(1, "w", "r"));
  CHECK(s.enqueue_command("r", 1, {}).status == Status::Unauthorized);
  CHECK(s.enqueue_command("w", 2, {}).status == Status::NotFound);
  std::vector<control::Verb> verbs{control::Verb::PumpOn, control::Verb::SetThresholds, control::Verb::PumpOff};
  std::vector<std::uint64_t> ids;
  for (auto v : verbs) ids.push_back(s.enqueue_command("w", 1, {0, v, {55, 75, 4}, {}}).value);
  CHECK(ids == std::vector<std::uint64_t>{1, 2, 3});
  for (std::size_t i = 0; i < verbs.size(); ++i) {
    auto c = s.execute_command("w", 1);
    REQUIRE(c.ok());
    REQUIRE(c.value);
    CHECK(c.value->id == ids[i]);
    CHECK(c.value->verb == verbs[i]);
  }
  auto empty = s.execute_command("w", 1);
  CHECK(empty.ok());
  CHECK_FALSE(empty.value);
}

TEST_CASE("service: CSV export re-parses to the stored entries") {
  IngestService s;
  s.create_channel(plant_channel(1, "w", "r"));
  CHECK(s.export_csv("r", 1).value == "entry_id,created_at,field1,field2,field3,field4,field5,field6,field7,field8\n");
  for (int i = 0; i < 20; ++i) {
    FieldSet f{};
    for (std::size_t k = 0; k < f.size(); ++k)
      if ((i + k) % 5 != 0) f[k] = i * 1.25 + static_cast<double>(k) / 3.0;
    s.update("w", f, i, Millis{1'748'736'000'000 + i * 15'000});
  }
  const auto feed = s.read_feed("r", 1).value;
  const auto rows = csv::parse(s.export_csv("r", 1).value);
  REQUIRE(rows.size() == feed.entries.size() + 1);
  for (std::size_t i = 0; i < feed.entries.size(); ++i) {
    const auto& row = rows[i + 1];
    const auto& e = feed.entries[i];
    REQUIRE(row.size() == 10);
    CHECK(std::stoull(row[0]) == e.entry_id);
    CHECK(parse_iso8601(row[1]) == e.created_at);
    for (std::size_t k = 0; k < 8; ++k) CHECK(csv::parse_number(row[2 + k]) == e.fields[k]);
  }
}

TEST_CASE("service: entry ids stay dense under concurrent writers") {
  IngestService s;
  s.create_channel(plant_channel(1, "w", "r"));
  constexpr int kWriters = 8, kEach = 250;
  std::vector<std::thread> writers;
  for (int w = 0; w < kWriters; ++w) {
    writers.emplace_back([&, w] {
      for (int i = 0; i < kEach; ++i) {
        const auto seq = static_cast<std::uint64_t>(w * kEach + i);
        s.update("w", soil_water(70, 30), seq, Millis{static_cast<std::int64_t>(seq)});
        if (i % 10 == 0) s.update("w", soil_water(70, 30), seq, Millis{0});  // retry
        if (i % 25 == 0) s.read_feed("r", 1, {5, {}, {}});
      }
    });
  }
  for (auto& t : writers) t.join();
  const auto feed = s.read_feed("r", 1).value;
  REQUIRE(feed.entries.size() == kWriters * kEach);
  std::set<std::uint64_t> seqs;
  for (std::size_t i = 0; i < feed.entries.size(); ++i) {
    CHECK(feed.entries[i].entry_id == i + 1);
    seqs.insert(*feed.entries[i].client_seq);
  }
  CHECK(seqs.size() == kWriters * kEach);
}

TEST_CASE("service: live mode rate-limits entries") {
  auto clock = std::make_shared<VirtualClock>(Millis{1'000'000});
  ServiceOptions o;
  o.live = true;
  o.clock = clock;
  IngestService s(o);
  s.create_channel(plant_channel(1, "w", "r"));
  CHECK(s.update("w", soil_water(70, 30)) == 1);
  clock->sleep_for(Millis{5000});
  CHECK(s.update("w", soil_water(70, 30)) == 0);
  clock->sleep_for(Millis{10'000});
  CHECK(s.update("w", soil_water(70, 30)) == 2);
  CHECK(s.read_feed("r", 1).value.entries.back().created_at == Millis{1'015'000});
}

TEST_CASE("service: alerts reach the configured sinks with a delivery log") {
  plantmon::testing::TempDir dir;
  IngestService s;
  s.create_channel(plant_channel(1, "w", "r"), default_rules(Thresholds{}));
  auto email = std::make_shared<FileSink>(dir.path() / "email.jsonl");
  auto sms = std::make_shared<MemorySink>();
  s.set_sink(AlertChannel::EmailLike, email);
  s.set_sink(AlertChannel::SmsLike, sms);
  s.update("w", soil_water(55, 30), 1, Millis{1000});
  s.update("w", soil_water(55, 3), 2, Millis{2000});
  auto log = s.alerts("r", 1).value;
  REQUIRE(log.alerts.size() == 2);
  REQUIRE(log.deliveries.size() == 2);
  for (const auto& d : log.deliveries) {
    CHECK(d.status == DeliveryStatus::Delivered);
    CHECK(d.attempts == 1);
  }
  CHECK(log.alerts[0].entry_id == 1);
  CHECK(log.alerts[1].event.kind == AlertKind::WaterCritical);
  CHECK(sms->received().size() == 1);
  const auto lines = read_file(dir.path() / "email.jsonl");
  CHECK(std::count(lines.begin(), lines.end(), '\n') == 1);
  CHECK(lines.find("\"channel_id\":1") != std::string::npos);

  auto broken = std::make_shared<BrokenSink>();
  s.set_sink(AlertChannel::SmsLike, broken);
  s.update("w", soil_water(85, 30), 3, Millis{3000});
  s.update("w", soil_water(85, 2), 4, Millis{4000});
  log = s.alerts("r", 1).value;
  REQUIRE(log.deliveries.size() == 3);
  CHECK(log.deliveries.back().status == DeliveryStatus::Failed);
  CHECK(log.deliveries.back().attempts == 3);
  CHECK(broken->calls == 3);

  s.enqueue_command("w", 1, {0, control::Verb::AckAlert, {}, log.alerts.back().event.id});
  CHECK(s.alerts("r", 1).value.alerts.back().acknowledged);
}

TEST_CASE("service: journal replay restores state, skipping a torn tail") {
  plantmon::testing::TempDir dir;
  ServiceOptions o;
  o.data_dir = dir.path();
  Feed before;
  AlertLog alerts_before;
  {
    IngestService s(o);
    s.create_channel(plant_channel(1, "w", "r"), default_rules(Thresholds{}));
    for (int i = 1; i <= 30; ++i) s.update("w", soil_water(i % 10 == 0 ? 50 : 70, 30), i, Millis{i * 1000});
    s.enqueue_command("w", 1, {0, control::Verb::PumpOn, {}, {}});
    s.enqueue_command("w", 1, {0, control::Verb::PumpOff, {}, {}});
    s.execute_command("w", 1);
    before = s.read_feed("r", 1).value;
    alerts_before = s.alerts("r", 1).value;
  }
  {
    std::ofstream out(dir.path() / "channel-1.jsonl", std::ios::app);
    out << R"({"type":"entry","entry_id":31,"created_)";
  }
  IngestService s(o);
  auto after = s.read_feed("r", 1).value;
  CHECK(after.entries == before.entries);
  CHECK(s.alerts("r", 1).value.alerts.size() == alerts_before.alerts.size());
  auto cmd = s.execute_command("w", 1).value;
  REQUIRE(cmd);
  CHECK(cmd->verb == control::Verb::PumpOff);
  CHECK(s.update("w", soil_water(70, 30), 5, Millis{0}) == 5);  // dedup survives restart
  CHECK(s.enqueue_command("w", 1, {}).value == 3);
}

TEST_CASE("service: a data dir is owned by one instance") {
  plantmon::testing::TempDir dir;
  ServiceOptions o;
  o.data_dir = dir.path();
  IngestService first(o);
  try {
    IngestService second(o);
    FAIL("second instance opened a locked data dir");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Lock);
  }
}

TEST_CASE("InProcessTransport maps results") {
  IngestService s;
  s.create_channel(plant_channel(1, "w", "r"));
  InProcessTransport ok(s, 1, "w", Millis{1000});
  telemetry::UploadRecord rec{3, Millis{500}, soil_water(70, 30)};
  auto r = ok.send(rec);
  CHECK(r.status == telemetry::SendStatus::Stored);
  CHECK(s.read_feed("r", 1).value.entries[0].created_at == Millis{1500});
  InProcessTransport bad(s, 1, "nope", Millis{0});
  CHECK(bad.send(rec).status == telemetry::SendStatus::Rejected);
  CHECK_FALSE(bad.execute_command().reachable);
}
