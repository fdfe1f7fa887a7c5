#include "plantmon/ingest.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "plantmon/csv.hpp"
#include "wire_json.hpp"

namespace plantmon::ingest {

using wire::json;

ChannelInfo plant_channel(std::uint64_t id, std::string write_key, std::string read_key) {
  ChannelInfo c;
  c.id = id;
  c.name = "Plant Monitor";
  c.write_key = std::move(write_key);
  c.read_key = std::move(read_key);
  c.field_labels = {"Temperature (C)", "Humidity (%RH)", "Soil Moisture (%)", "Water Level (cm)",
                    "Nutrient Temperature (C)", "Pump (0/1)", "Alert Level", "Sampling Rate (Hz)"};
  return c;
}

std::vector<AlertRule> default_rules(const Thresholds& th) {
  const double band = th.soil_high_pct - th.soil_low_pct;
  AlertRule soil;
  soil.id = 1;
  soil.name = "soil below low threshold";
  soil.field = 3;
  soil.cmp = Comparator::Less;
  soil.threshold = th.soil_low_pct;
  soil.kind = AlertKind::SoilCritical;
  soil.severity = Severity::Warning;
  soil.sink = AlertChannel::EmailLike;
  soil.rearm_gap = band;

  AlertRule water;
  water.id = 2;
  water.name = "water level critical";
  water.field = 4;
  water.cmp = Comparator::Less;
  water.threshold = th.water_critical_cm;
  water.kind = AlertKind::WaterCritical;
  water.severity = Severity::Critical;
  water.sink = AlertChannel::SmsLike;
  water.rearm_gap = band;
  return {soil, water};
}

void RuleBook::add(AlertRule r) {
  rules.push_back(std::move(r));
  armed.push_back(true);
}

std::vector<FiredAlert> evaluate_rules(RuleBook& book, const ChannelEntry& entry) {
  std::vector<FiredAlert> fired;
  book.armed.resize(book.rules.size(), true);
  for (std::size_t i = 0; i < book.rules.size(); ++i) {
    const AlertRule& r = book.rules[i];
    if (r.field < 1 || r.field > static_cast<int>(kFieldCount)) continue;
    const auto& value = entry.fields[static_cast<std::size_t>(r.field - 1)];
    if (!value) continue;
    const double v = *value;
    const bool triggered = r.cmp == Comparator::Less ? v < r.threshold : v > r.threshold;
    if (book.armed[i]) {
      if (!triggered) continue;
      book.armed[i] = false;
      AlertEvent ev;
      ev.t = entry.created_at;
      ev.kind = r.kind;
      ev.severity = r.severity;
      ev.channel = r.sink;
      ev.payload = r.name + ": field" + std::to_string(r.field) + "=" + csv::format_number(v) +
                   (r.cmp == Comparator::Less ? " < " : " > ") + csv::format_number(r.threshold);
      fired.push_back({r.id, std::move(ev)});
    } else {
      const bool rearm = r.cmp == Comparator::Less ? v >= r.threshold + r.rearm_gap : v <= r.threshold - r.rearm_gap;
      if (rearm) book.armed[i] = true;
    }
  }
  return fired;
}

bool MemorySink::deliver(const AlertEvent& alert, const ChannelInfo&) {
  std::lock_guard lock(mu_);
  received_.push_back(alert);
  return true;
}

std::vector<AlertEvent> MemorySink::received() const {
  std::lock_guard lock(mu_);
  return received_;
}

bool FileSink::deliver(const AlertEvent& alert, const ChannelInfo& channel) {
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::app);
  if (!out) return false;
  json j = wire::to_json(alert);
  j["channel_id"] = channel.id;
  out << j.dump() << '\n';
  out.flush();
  return static_cast<bool>(out);
}

std::string_view to_string(DeliveryStatus s) { return s == DeliveryStatus::Delivered ? "Delivered" : "Failed"; }

struct IngestService::ChannelState {
  ChannelInfo info;
  mutable std::shared_mutex mu;
  std::vector<ChannelEntry> entries;
  std::unordered_map<std::uint64_t, std::uint64_t> by_seq;
  RuleBook rules;
  std::deque<control::RemoteCommand> commands;
  std::uint64_t next_command_id = 1;
  AlertLog log;
  std::ofstream journal;
};

namespace {

json rules_json(const RuleBook& book) {
  json arr = json::array();
  for (const auto& r : book.rules) arr.push_back(wire::to_json(r));
  return arr;
}

std::filesystem::path journal_path(const std::filesystem::path& dir, std::uint64_t id) {
  return dir / ("channel-" + std::to_string(id) + ".jsonl");
}

json fields_json(const FieldSet& f) {
  json arr = json::array();
  for (const auto& v : f) arr.push_back(v ? json(*v) : json(nullptr));
  return arr;
}

FieldSet fields_from(const json& arr) {
  FieldSet f{};
  for (std::size_t i = 0; i < kFieldCount && i < arr.size(); ++i)
    if (!arr[i].is_null()) f[i] = arr[i].get<double>();
  return f;
}

}  // namespace

IngestService::IngestService(ServiceOptions opts) : opts_(std::move(opts)) {
  if (!opts_.clock) opts_.clock = std::make_shared<SystemClock>();
  sinks_[0] = std::make_shared<MemorySink>();
  sinks_[1] = std::make_shared<MemorySink>();
  if (!opts_.data_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(opts_.data_dir, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create data dir " + opts_.data_dir.string() + ": " + ec.message());
    const auto lock_path = opts_.data_dir / "LOCK";
    lock_fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
    if (lock_fd_ < 0) throw Error(ErrorCode::Io, "cannot open " + lock_path.string());
    if (::flock(lock_fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(lock_fd_);
      lock_fd_ = -1;
      throw Error(ErrorCode::Lock, "data dir " + opts_.data_dir.string() + " is in use by another service instance");
    }
    load_from_disk();
  }
}

IngestService::~IngestService() {
  try {
    checkpoint();
  } catch (...) {
  }
  if (lock_fd_ >= 0) {
    ::flock(lock_fd_, LOCK_UN);
    ::close(lock_fd_);
  }
}

UnixMillis IngestService::now() const { return opts_.clock->now(); }

IngestService::ChannelState* IngestService::find(std::uint64_t id) const {
  std::shared_lock lock(channels_mu_);
  auto it = channels_.find(id);
  return it == channels_.end() ? nullptr : it->second.get();
}

IngestService::ChannelState* IngestService::find_by_write_key(std::string_view key) const {
  std::shared_lock lock(channels_mu_);
  for (const auto& [id, ch] : channels_)
    if (ch->info.write_key == key) return ch.get();
  return nullptr;
}

void IngestService::persist_channels_locked() const {
  if (opts_.data_dir.empty()) return;
  json arr = json::array();
  for (const auto& [id, ch] : channels_) {
    json c = wire::to_json(ch->info, 0);
    c.erase("last_entry_id");
    c["write_key"] = ch->info.write_key;
    c["read_key"] = ch->info.read_key;
    c["rules"] = rules_json(ch->rules);
    arr.push_back(c);
  }
  const auto tmp = opts_.data_dir / "channels.json.tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << arr.dump(2) << '\n';
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, opts_.data_dir / "channels.json");
}

void IngestService::create_channel(const ChannelInfo& info, std::vector<AlertRule> rules) {
  if (info.write_key.empty() || info.read_key.empty() || info.write_key == info.read_key)
    throw Error(ErrorCode::Config, "channel keys must be non-empty and distinct");
  std::unique_lock lock(channels_mu_);
  if (channels_.count(info.id)) throw Error(ErrorCode::Config, "channel " + std::to_string(info.id) + " exists");
  for (const auto& [id, ch] : channels_)
    if (ch->info.write_key == info.write_key) throw Error(ErrorCode::Config, "write key already in use");
  auto ch = std::make_unique<ChannelState>();
  ch->info = info;
  if (ch->info.created_at == UnixMillis{0}) ch->info.created_at = now();
  for (auto& r : rules) ch->rules.add(std::move(r));
  if (!opts_.data_dir.empty()) {
    ch->journal.open(journal_path(opts_.data_dir, info.id), std::ios::app | std::ios::binary);
  }
  channels_.emplace(info.id, std::move(ch));
  persist_channels_locked();
}

std::optional<ChannelInfo> IngestService::channel(std::uint64_t id) const {
  if (auto* ch = find(id)) return ch->info;
  return std::nullopt;
}

std::vector<ChannelInfo> IngestService::channels() const {
  std::shared_lock lock(channels_mu_);
  std::vector<ChannelInfo> out;
  for (const auto& [id, ch] : channels_) out.push_back(ch->info);
  return out;
}

void IngestService::add_rule(std::uint64_t channel_id, AlertRule rule) {
  ChannelState* ch = find(channel_id);
  if (!ch) throw Error(ErrorCode::Config, "unknown channel " + std::to_string(channel_id));
  {
    std::unique_lock lock(ch->mu);
    if (rule.id == 0) rule.id = ch->rules.rules.size() + 1;
    ch->rules.add(std::move(rule));
  }
  std::unique_lock lock(channels_mu_);
  persist_channels_locked();
}

void IngestService::set_sink(AlertChannel kind, std::shared_ptr<AlertSink> sink) {
  std::lock_guard lock(sinks_mu_);
  sinks_[static_cast<std::size_t>(kind)] = std::move(sink);
}

void IngestService::journal(ChannelState& ch, const std::string& line) {
  if (!ch.journal.is_open()) return;
  ch.journal << line << '\n';
  ch.journal.flush();
}

void IngestService::deliver_locked(ChannelState& ch, std::vector<FiredAlert> fired, std::uint64_t entry_id,
                                   UnixMillis at) {
  for (FiredAlert& f : fired) {
    DeliveryLogEntry d;
    {
      std::lock_guard lock(sinks_mu_);
      f.event.id = next_alert_id_++;
      d.alert_id = f.event.id;
      d.sink = f.event.channel;
      d.enqueued_at = opts_.live ? now() : at;
      const auto& sink = sinks_[static_cast<std::size_t>(f.event.channel)];
      d.status = DeliveryStatus::Failed;
      for (int attempt = 0; sink && attempt < std::max(opts_.delivery_attempts, 1); ++attempt) {
        ++d.attempts;
        bool ok = false;
        try {
          ok = sink->deliver(f.event, ch.info);
        } catch (const std::exception&) {
          ok = false;
        }
        if (ok) {
          d.status = DeliveryStatus::Delivered;
          break;
        }
      }
      d.delivered_at = opts_.live ? now() : at;
    }
    AlertRecord rec{f.event, f.rule_id, entry_id, false};
    journal(ch, json{{"type", "alert"}, {"alert", wire::to_json(rec)}, {"delivery", wire::to_json(d)}}.dump());
    ch.log.alerts.push_back(std::move(rec));
    ch.log.deliveries.push_back(d);
  }
}

std::uint64_t IngestService::update(std::string_view write_key, const FieldSet& fields,
                                    std::optional<std::uint64_t> client_seq, std::optional<UnixMillis> created_at) {
  ChannelState* ch = find_by_write_key(write_key);
  if (!ch || write_key.empty()) return 0;
  std::unique_lock lock(ch->mu);
  if (client_seq) {
    if (auto it = ch->by_seq.find(*client_seq); it != ch->by_seq.end()) return it->second;
  }
  const UnixMillis stamp = created_at.value_or(now());
  if (opts_.live && !ch->entries.empty() && stamp - ch->entries.back().created_at < opts_.min_entry_interval)
    return 0;

  ChannelEntry e;
  e.entry_id = ch->entries.size() + 1;
  e.created_at = stamp;
  e.fields = fields;
  e.client_seq = client_seq;
  json line{{"type", "entry"}, {"entry_id", e.entry_id}, {"created_at_ms", e.created_at.count()},
            {"fields", fields_json(e.fields)}};
  if (client_seq) line["seq"] = *client_seq;
  journal(*ch, line.dump());
  ch->entries.push_back(e);
  if (client_seq) ch->by_seq.emplace(*client_seq, e.entry_id);

  deliver_locked(*ch, evaluate_rules(ch->rules, e), e.entry_id, e.created_at);
  return e.entry_id;
}

namespace {

std::vector<ChannelEntry> select(const std::vector<ChannelEntry>& entries, const FeedQuery& q) {
  std::vector<ChannelEntry> out;
  for (const auto& e : entries) {
    if (q.start && e.created_at < *q.start) continue;
    if (q.end && e.created_at > *q.end) continue;
    out.push_back(e);
  }
  if (q.results && out.size() > *q.results)
    out.erase(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(out.size() - *q.results));
  return out;
}

}  // namespace

Reply<Feed> IngestService::read_feed(std::string_view read_key, std::uint64_t channel_id, const FeedQuery& q) const {
  ChannelState* ch = find(channel_id);
  if (!ch) return {Status::NotFound, {}};
  if (read_key.empty() || read_key != ch->info.read_key) return {Status::Unauthorized, {}};
  std::shared_lock lock(ch->mu);
  Feed f;
  f.channel = ch->info;
  f.last_entry_id = ch->entries.size();
  f.entries = select(ch->entries, q);
  return {Status::Ok, std::move(f)};
}

Reply<std::uint64_t> IngestService::enqueue_command(std::string_view write_key, std::uint64_t channel_id,
                                                    control::RemoteCommand cmd) {
  ChannelState* ch = find(channel_id);
  if (!ch) return {Status::NotFound, 0};
  if (write_key.empty() || write_key != ch->info.write_key) return {Status::Unauthorized, 0};
  std::unique_lock lock(ch->mu);
  cmd.id = ch->next_command_id++;
  journal(*ch, json{{"type", "command"}, {"command", wire::to_json(cmd)}}.dump());
  if (cmd.verb == control::Verb::AckAlert && cmd.alert_id) {
    for (auto& a : ch->log.alerts) {
      if (a.event.id == *cmd.alert_id && !a.acknowledged) {
        a.acknowledged = true;
        journal(*ch, json{{"type", "ack"}, {"alert_id", a.event.id}}.dump());
      }
    }
  }
  ch->commands.push_back(cmd);
  return {Status::Ok, cmd.id};
}

Reply<std::optional<control::RemoteCommand>> IngestService::execute_command(std::string_view write_key,
                                                                            std::uint64_t channel_id) {
  ChannelState* ch = find(channel_id);
  if (!ch) return {Status::NotFound, std::nullopt};
  if (write_key.empty() || write_key != ch->info.write_key) return {Status::Unauthorized, std::nullopt};
  std::unique_lock lock(ch->mu);
  if (ch->commands.empty()) return {Status::Ok, std::nullopt};
  control::RemoteCommand cmd = ch->commands.front();
  ch->commands.pop_front();
  journal(*ch, json{{"type", "executed"}, {"id", cmd.id}}.dump());
  return {Status::Ok, cmd};
}

Reply<std::string> IngestService::export_csv(std::string_view read_key, std::uint64_t channel_id,
                                             const FeedQuery& q) const {
  auto feed = read_feed(read_key, channel_id, q);
  if (!feed.ok()) return {feed.status, {}};
  std::string out = "entry_id,created_at";
  for (std::size_t i = 0; i < kFieldCount; ++i) out += ",field" + std::to_string(i + 1);
  out += '\n';
  for (const auto& e : feed.value.entries) {
    std::vector<std::string> cells{std::to_string(e.entry_id), format_iso8601(e.created_at)};
    for (const auto& f : e.fields) cells.push_back(f ? csv::format_number(*f) : std::string{});
    out += csv::join_row(cells);
    out += '\n';
  }
  return {Status::Ok, std::move(out)};
}

Reply<AlertLog> IngestService::alerts(std::string_view read_key, std::uint64_t channel_id) const {
  ChannelState* ch = find(channel_id);
  if (!ch) return {Status::NotFound, {}};
  if (read_key.empty() || read_key != ch->info.read_key) return {Status::Unauthorized, {}};
  std::shared_lock lock(ch->mu);
  return {Status::Ok, ch->log};
}

void IngestService::checkpoint() {
  if (opts_.data_dir.empty()) return;
  std::shared_lock lock(channels_mu_);
  json marks = json::object();
  for (auto& [id, ch] : channels_) {
    std::unique_lock chl(ch->mu);
    if (ch->journal.is_open()) ch->journal.flush();
    marks[std::to_string(id)] = ch->entries.size();
  }
  std::ofstream out(opts_.data_dir / "checkpoint.json", std::ios::trunc);
  out << json{{"at", format_iso8601(now())}, {"last_entry_ids", marks}}.dump() << '\n';
}

void IngestService::load_from_disk() {
  const auto path = opts_.data_dir / "channels.json";
  if (!std::filesystem::exists(path)) return;
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  json arr;
  try {
    arr = json::parse(ss.str());
    for (const auto& c : arr) {
      auto ch = std::make_unique<ChannelState>();
      ch->info = wire::channel_from(c);
      for (const auto& r : c.value("rules", json::array())) ch->rules.add(wire::rule_from(r));
      replay(*ch);
      ch->journal.open(journal_path(opts_.data_dir, ch->info.id), std::ios::app | std::ios::binary);
      channels_.emplace(ch->info.id, std::move(ch));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Io, "corrupt " + path.string() + ": " + e.what());
  }
}

void IngestService::replay(ChannelState& ch) {
  std::ifstream in(journal_path(opts_.data_dir, ch.info.id), std::ios::binary);
  if (!in) return;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      break;  // torn final write
    }
    const std::string type = j.value("type", "");
    if (type == "entry") {
      ChannelEntry e;
      e.entry_id = j.at("entry_id").get<std::uint64_t>();
      if (e.entry_id != ch.entries.size() + 1) continue;
      e.created_at = UnixMillis{j.at("created_at_ms").get<std::int64_t>()};
      e.fields = fields_from(j.at("fields"));
      if (j.contains("seq")) {
        e.client_seq = j["seq"].get<std::uint64_t>();
        ch.by_seq.emplace(*e.client_seq, e.entry_id);
      }
      ch.entries.push_back(e);
      evaluate_rules(ch.rules, e);  // restores armed state only
    } else if (type == "alert") {
      AlertRecord rec = wire::alert_record_from(j.at("alert"));
      next_alert_id_ = std::max(next_alert_id_, rec.event.id + 1);
      ch.log.alerts.push_back(rec);
      ch.log.deliveries.push_back(wire::delivery_from(j.at("delivery")));
    } else if (type == "command") {
      control::RemoteCommand cmd = wire::command_from(j.at("command"));
      ch.next_command_id = std::max(ch.next_command_id, cmd.id + 1);
      ch.commands.push_back(cmd);
    } else if (type == "executed") {
      const auto id = j.at("id").get<std::uint64_t>();
      std::erase_if(ch.commands, [&](const control::RemoteCommand& c) { return c.id == id; });
    } else if (type == "ack") {
      const auto id = j.at("alert_id").get<std::uint64_t>();
      for (auto& a : ch.log.alerts)
        if (a.event.id == id) a.acknowledged = true;
    }
  }
}

InProcessTransport::InProcessTransport(IngestService& service, std::uint64_t channel_id, std::string write_key,
                                       UnixMillis epoch)
    : service_(service), channel_id_(channel_id), write_key_(std::move(write_key)), epoch_(epoch) {}

telemetry::SendResult InProcessTransport::send(const telemetry::UploadRecord& rec) {
  const std::uint64_t id = service_.update(write_key_, rec.fields, rec.seq, epoch_ + rec.t);
  if (id == 0) return {telemetry::SendStatus::Rejected, 0};
  return {telemetry::SendStatus::Stored, id};
}

telemetry::CommandPoll InProcessTransport::execute_command() {
  auto r = service_.execute_command(write_key_, channel_id_);
  if (!r.ok()) return {false, std::nullopt};
  return {true, std::move(r.value)};
}

}  // namespace plantmon::ingest
