#include "plantmon/wire.hpp"

#include "plantmon/csv.hpp"
#include "wire_json.hpp"

namespace plantmon::wire {

using telemetry::kFieldCount;

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::Protocol, what); }

std::string iso(UnixMillis t) { return format_iso8601(t); }

UnixMillis iso_from(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string()) bad(std::string("missing timestamp ") + key);
  auto t = parse_iso8601(j[key].get<std::string>());
  if (!t) bad(std::string("bad timestamp ") + key);
  return *t;
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  return it->get<T>();
}

std::string field_key(std::size_t i) { return "field" + std::to_string(i + 1); }

}  // namespace

json parse(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    bad(std::string("malformed JSON: ") + e.what());
  }
}

json to_json(const control::RemoteCommand& cmd) {
  json j{{"id", cmd.id}, {"verb", std::string(control::to_string(cmd.verb))}};
  if (cmd.verb == control::Verb::SetThresholds) {
    j["soil_low_pct"] = cmd.thresholds.soil_low_pct;
    j["soil_high_pct"] = cmd.thresholds.soil_high_pct;
    j["water_critical_cm"] = cmd.thresholds.water_critical_cm;
  }
  if (cmd.alert_id) j["alert_id"] = *cmd.alert_id;
  return j;
}

control::RemoteCommand command_from(const json& j) {
  try {
    if (!j.is_object()) bad("command must be an object");
    control::RemoteCommand cmd;
    cmd.id = get_or<std::uint64_t>(j, "id", 0);
    auto verb = control::parse_verb(j.at("verb").get<std::string>());
    if (!verb) bad("unknown verb " + j.at("verb").get<std::string>());
    cmd.verb = *verb;
    if (cmd.verb == control::Verb::SetThresholds) {
      cmd.thresholds.soil_low_pct = j.at("soil_low_pct").get<double>();
      cmd.thresholds.soil_high_pct = j.at("soil_high_pct").get<double>();
      cmd.thresholds.water_critical_cm = get_or<double>(j, "water_critical_cm", Thresholds{}.water_critical_cm);
    }
    if (j.contains("alert_id") && !j["alert_id"].is_null()) cmd.alert_id = j["alert_id"].get<std::uint64_t>();
    return cmd;
  } catch (const json::exception& e) {
    bad(std::string("bad command: ") + e.what());
  }
}

json to_json(const ingest::ChannelInfo& info, std::uint64_t last_entry_id) {
  json j{{"id", info.id}, {"name", info.name}, {"created_at", iso(info.created_at)}, {"last_entry_id", last_entry_id}};
  for (std::size_t i = 0; i < kFieldCount; ++i)
    if (!info.field_labels[i].empty()) j[field_key(i)] = info.field_labels[i];
  return j;
}

ingest::ChannelInfo channel_from(const json& j) {
  ingest::ChannelInfo info;
  info.id = j.at("id").get<std::uint64_t>();
  info.name = get_or<std::string>(j, "name", "");
  info.write_key = get_or<std::string>(j, "write_key", "");
  info.read_key = get_or<std::string>(j, "read_key", "");
  if (j.contains("created_at")) info.created_at = iso_from(j, "created_at");
  for (std::size_t i = 0; i < kFieldCount; ++i) info.field_labels[i] = get_or<std::string>(j, field_key(i).c_str(), "");
  return info;
}

json to_json(const ingest::ChannelEntry& e, std::optional<int> only_field) {
  json j{{"created_at", iso(e.created_at)}, {"entry_id", e.entry_id}};
  for (std::size_t i = 0; i < kFieldCount; ++i) {
    if (only_field && static_cast<int>(i) + 1 != *only_field) continue;
    j[field_key(i)] = e.fields[i] ? json(csv::format_number(*e.fields[i])) : json(nullptr);
  }
  return j;
}

ingest::ChannelEntry entry_from(const json& j) {
  ingest::ChannelEntry e;
  e.entry_id = j.at("entry_id").get<std::uint64_t>();
  e.created_at = iso_from(j, "created_at");
  for (std::size_t i = 0; i < kFieldCount; ++i) {
    auto it = j.find(field_key(i));
    if (it == j.end() || it->is_null()) continue;
    if (it->is_number()) {
      e.fields[i] = it->get<double>();
    } else {
      e.fields[i] = csv::parse_number(it->get<std::string>());
    }
  }
  return e;
}

json to_json(const ingest::AlertRule& r) {
  return json{{"id", r.id},
              {"name", r.name},
              {"field", r.field},
              {"comparator", r.cmp == ingest::Comparator::Less ? "<" : ">"},
              {"threshold", r.threshold},
              {"kind", std::string(to_string(r.kind))},
              {"severity", std::string(to_string(r.severity))},
              {"sink", std::string(to_string(r.sink))},
              {"rearm_gap", r.rearm_gap}};
}

ingest::AlertRule rule_from(const json& j) {
  ingest::AlertRule r;
  r.id = get_or<std::uint64_t>(j, "id", 0);
  r.name = get_or<std::string>(j, "name", "");
  r.field = j.at("field").get<int>();
  if (r.field < 1 || r.field > static_cast<int>(kFieldCount)) bad("rule field out of range");
  const std::string cmp = j.at("comparator").get<std::string>();
  if (cmp == "<") {
    r.cmp = ingest::Comparator::Less;
  } else if (cmp == ">") {
    r.cmp = ingest::Comparator::Greater;
  } else {
    bad("comparator must be < or >");
  }
  r.threshold = j.at("threshold").get<double>();
  auto kind = parse_alert_kind(get_or<std::string>(j, "kind", "SoilCritical"));
  auto sev = parse_severity(get_or<std::string>(j, "severity", "Warning"));
  auto sink = parse_alert_channel(get_or<std::string>(j, "sink", "EmailLike"));
  if (!kind || !sev || !sink) bad("bad rule kind/severity/sink");
  r.kind = *kind;
  r.severity = *sev;
  r.sink = *sink;
  r.rearm_gap = get_or<double>(j, "rearm_gap", 0.0);
  if (r.rearm_gap < 0.0) bad("rearm_gap must be >= 0");
  return r;
}

json to_json(const AlertEvent& ev) {
  return json{{"id", ev.id},
              {"t", iso(ev.t)},
              {"kind", std::string(to_string(ev.kind))},
              {"severity", std::string(to_string(ev.severity))},
              {"channel", std::string(to_string(ev.channel))},
              {"payload", ev.payload}};
}

AlertEvent alert_event_from(const json& j) {
  AlertEvent ev;
  ev.id = j.at("id").get<std::uint64_t>();
  ev.t = iso_from(j, "t");
  auto kind = parse_alert_kind(j.at("kind").get<std::string>());
  auto sev = parse_severity(j.at("severity").get<std::string>());
  auto ch = parse_alert_channel(j.at("channel").get<std::string>());
  if (!kind || !sev || !ch) bad("bad alert enum");
  ev.kind = *kind;
  ev.severity = *sev;
  ev.channel = *ch;
  ev.payload = get_or<std::string>(j, "payload", "");
  return ev;
}

json to_json(const ingest::AlertRecord& r) {
  json j = to_json(r.event);
  j["rule_id"] = r.rule_id;
  j["entry_id"] = r.entry_id;
  j["acknowledged"] = r.acknowledged;
  return j;
}

ingest::AlertRecord alert_record_from(const json& j) {
  ingest::AlertRecord r;
  r.event = alert_event_from(j);
  r.rule_id = get_or<std::uint64_t>(j, "rule_id", 0);
  r.entry_id = get_or<std::uint64_t>(j, "entry_id", 0);
  r.acknowledged = get_or<bool>(j, "acknowledged", false);
  return r;
}

json to_json(const ingest::DeliveryLogEntry& d) {
  return json{{"alert_id", d.alert_id},
              {"sink", std::string(to_string(d.sink))},
              {"enqueued_at", iso(d.enqueued_at)},
              {"delivered_at", iso(d.delivered_at)},
              {"status", std::string(ingest::to_string(d.status))},
              {"attempts", d.attempts}};
}

ingest::DeliveryLogEntry delivery_from(const json& j) {
  ingest::DeliveryLogEntry d;
  d.alert_id = j.at("alert_id").get<std::uint64_t>();
  auto sink = parse_alert_channel(j.at("sink").get<std::string>());
  if (!sink) bad("bad sink");
  d.sink = *sink;
  d.enqueued_at = iso_from(j, "enqueued_at");
  d.delivered_at = iso_from(j, "delivered_at");
  d.status = j.at("status").get<std::string>() == "Delivered" ? ingest::DeliveryStatus::Delivered
                                                             : ingest::DeliveryStatus::Failed;
  d.attempts = get_or<int>(j, "attempts", 0);
  return d;
}

std::string command_to_json(const control::RemoteCommand& cmd) { return to_json(cmd).dump(); }

control::RemoteCommand command_from_json(std::string_view text) { return command_from(parse(text)); }

std::string feed_to_json(const ingest::Feed& feed, std::optional<int> only_field) {
  json channel = to_json(feed.channel, feed.last_entry_id);
  if (only_field) {
    // single-field documents keep only that field's label
    for (std::size_t i = 0; i < kFieldCount; ++i)
      if (static_cast<int>(i) + 1 != *only_field) channel.erase(field_key(i));
  }
  json feeds = json::array();
  for (const auto& e : feed.entries) feeds.push_back(to_json(e, only_field));
  return json{{"channel", channel}, {"feeds", feeds}}.dump();
}

ingest::Feed feed_from_json(std::string_view text) {
  const json j = parse(text);
  try {
    ingest::Feed feed;
    feed.channel = channel_from(j.at("channel"));
    feed.last_entry_id = get_or<std::uint64_t>(j.at("channel"), "last_entry_id", 0);
    for (const auto& e : j.at("feeds")) feed.entries.push_back(entry_from(e));
    return feed;
  } catch (const json::exception& e) {
    bad(std::string("bad feed: ") + e.what());
  }
}

std::string alerts_to_json(const ingest::AlertLog& log) {
  json alerts = json::array();
  for (const auto& a : log.alerts) alerts.push_back(to_json(a));
  json deliveries = json::array();
  for (const auto& d : log.deliveries) deliveries.push_back(to_json(d));
  return json{{"alerts", alerts}, {"deliveries", deliveries}}.dump();
}

ingest::AlertLog alerts_from_json(std::string_view text) {
  const json j = parse(text);
  try {
    ingest::AlertLog log;
    for (const auto& a : j.at("alerts")) log.alerts.push_back(alert_record_from(a));
    for (const auto& d : j.at("deliveries")) log.deliveries.push_back(delivery_from(d));
    return log;
  } catch (const json::exception& e) {
    bad(std::string("bad alert log: ") + e.what());
  }
}

}  // namespace plantmon::wire
