#pragma once

// Channel store compatible with the ThingSpeak data model: per-channel
// entries with eight numeric fields, read/write API keys, a talkback-style
// command queue, and threshold alert rules delivered to two sink types.
//
// Each channel has its own reader/writer lock; writes are serialised per
// channel and readers see committed entries only. Channels share nothing.

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "plantmon/clock.hpp"
#include "plantmon/controller.hpp"
#include "plantmon/domain.hpp"
#include "plantmon/telemetry.hpp"

namespace plantmon::ingest {

using telemetry::FieldSet;
using telemetry::kFieldCount;

struct ChannelInfo {
  std::uint64_t id = 0;
  std::string name;
  std::string write_key;
  std::string read_key;
  std::array<std::string, kFieldCount> field_labels{};
  UnixMillis created_at{0};
};

// The eight-field layout the device uploads.
ChannelInfo plant_channel(std::uint64_t id, std::string write_key, std::string read_key);

struct ChannelEntry {
  std::uint64_t entry_id = 0;
  UnixMillis created_at{0};
  FieldSet fields{};
  std::optional<std::uint64_t> client_seq;
  friend bool operator==(const ChannelEntry&, const ChannelEntry&) = default;
};

// ---- alert rules ---------------------------------------------------------

enum class Comparator : std::uint8_t { Less, Greater };

struct AlertRule {
  std::uint64_t id = 0;
  std::string name;
  int field = 1;  // 1..8
  Comparator cmp = Comparator::Less;
  double threshold = 0.0;
  AlertKind kind = AlertKind::SoilCritical;
  Severity severity = Severity::Warning;
  AlertChannel sink = AlertChannel::EmailLike;
  // After firing, the rule re-arms once the value is back on the safe side
  // by at least this much (v >= threshold + gap for Less,
  // v <= threshold - gap for Greater).
  double rearm_gap = 0.0;
};

// Soil-low (email) and water-critical (SMS) rules derived from the device
// thresholds; the re-arm gap is the hysteresis band width.
std::vector<AlertRule> default_rules(const Thresholds& th);

struct RuleBook {
  std::vector<AlertRule> rules;
  std::vector<bool> armed;  // parallel to rules

  void add(AlertRule r);
};

struct FiredAlert {
  std::uint64_t rule_id = 0;
  AlertEvent event;  // id left 0 for the caller to assign
};

// Edge-triggered evaluation of every rule against one entry. Rules whose
// field is absent in the entry are skipped and keep their state.
std::vector<FiredAlert> evaluate_rules(RuleBook& book, const ChannelEntry& entry);

// ---- sinks ---------------------------------------------------------------

class AlertSink {
 public:
  virtual ~AlertSink() = default;
  // Returns true when the sink accepted the alert.
  virtual bool deliver(const AlertEvent& alert, const ChannelInfo& channel) = 0;
};

class MemorySink final : public AlertSink {
 public:
  bool deliver(const AlertEvent& alert, const ChannelInfo& channel) override;
  std::vector<AlertEvent> received() const;

 private:
  mutable std::mutex mu_;
  std::vector<AlertEvent> received_;
};

// Appends one JSON object per line.
class FileSink final : public AlertSink {
 public:
  explicit FileSink(std::filesystem::path path) : path_(std::move(path)) {}
  bool deliver(const AlertEvent& alert, const ChannelInfo& channel) override;

 private:
  std::mutex mu_;
  std::filesystem::path path_;
};

enum class DeliveryStatus : std::uint8_t { Delivered, Failed };
std::string_view to_string(DeliveryStatus s);

struct DeliveryLogEntry {
  std::uint64_t alert_id = 0;
  AlertChannel sink = AlertChannel::EmailLike;
  UnixMillis enqueued_at{0};
  UnixMillis delivered_at{0};
  DeliveryStatus status = DeliveryStatus::Failed;
  int attempts = 0;
};

struct AlertRecord {
  AlertEvent event;
  std::uint64_t rule_id = 0;
  std::uint64_t entry_id = 0;
  bool acknowledged = false;
};

struct AlertLog {
  std::vector<AlertRecord> alerts;
  std::vector<DeliveryLogEntry> deliveries;
};

// ---- service -------------------------------------------------------------

enum class Status : std::uint8_t { Ok, Unauthorized, NotFound, BadRequest };

template <class T>
struct Reply {
  Status status = Status::Ok;
  T value{};
  bool ok() const { return status == Status::Ok; }
};

struct FeedQuery {
  std::optional<std::size_t> results;  // last N after range filtering; all when unset
  std::optional<UnixMillis> start;     // inclusive
  std::optional<UnixMillis> end;       // inclusive
};

struct Feed {
  ChannelInfo channel;
  std::uint64_t last_entry_id = 0;
  std::vector<ChannelEntry> entries;
};

struct ServiceOptions {
  // Live mode enforces a minimum spacing between stored entries' timestamps
  // and stamps entries without created_at from the wall clock. Virtual mode
  // trusts client timestamps.
  bool live = false;
  Millis min_entry_interval{15'000};
  int delivery_attempts = 3;
  std::shared_ptr<Clock> clock;  // defaults to SystemClock
  // Journal directory; empty keeps everything in memory.
  std::filesystem::path data_dir;
};

class IngestService {
 public:
  explicit IngestService(ServiceOptions opts = {});
  ~IngestService();
  IngestService(const IngestService&) = delete;
  IngestService& operator=(const IngestService&) = delete;

  // Registers a channel (persisted when journaling). Throws Error{Config}
  // for a duplicate id or equal read/write keys.
  void create_channel(const ChannelInfo& info, std::vector<AlertRule> rules = {});
  std::optional<ChannelInfo> channel(std::uint64_t id) const;
  std::vector<ChannelInfo> channels() const;
  void add_rule(std::uint64_t channel_id, AlertRule rule);
  void set_sink(AlertChannel kind, std::shared_ptr<AlertSink> sink);

  // Returns the new (or, for a repeated client_seq, the existing) entry id;
  // 0 for an unknown key or a rate-limit rejection.
  std::uint64_t update(std::string_view write_key, const FieldSet& fields,
                       std::optional<std::uint64_t> client_seq = std::nullopt,
                       std::optional<UnixMillis> created_at = std::nullopt);

  Reply<Feed> read_feed(std::string_view read_key, std::uint64_t channel_id, const FeedQuery& q = {}) const;
  Reply<std::uint64_t> enqueue_command(std::string_view write_key, std::uint64_t channel_id,
                                       control::RemoteCommand cmd);
  Reply<std::optional<control::RemoteCommand>> execute_command(std::string_view write_key,
                                                               std::uint64_t channel_id);
  Reply<std::string> export_csv(std::string_view read_key, std::uint64_t channel_id, const FeedQuery& q = {}) const;
  Reply<AlertLog> alerts(std::string_view read_key, std::uint64_t channel_id) const;

  // Flushes journals and writes a checkpoint marker. Also run by the
  // destructor.
  void checkpoint();

 private:
  struct ChannelState;

  ChannelState* find(std::uint64_t id) const;
  ChannelState* find_by_write_key(std::string_view key) const;
  void load_from_disk();
  void persist_channels_locked() const;
  void journal(ChannelState& ch, const std::string& line);
  void replay(ChannelState& ch);
  void deliver_locked(ChannelState& ch, std::vector<FiredAlert> fired, std::uint64_t entry_id, UnixMillis at);
  UnixMillis now() const;

  ServiceOptions opts_;
  mutable std::shared_mutex channels_mu_;
  std::map<std::uint64_t, std::unique_ptr<ChannelState>> channels_;
  std::mutex sinks_mu_;
  std::array<std::shared_ptr<AlertSink>, 2> sinks_;
  std::uint64_t next_alert_id_ = 1;  // guarded by sinks_mu_
  int lock_fd_ = -1;
};

// Transport that calls an in-process service directly. Run-relative record
// times are offset by `epoch`.
class InProcessTransport final : public telemetry::Transport {
 public:
  InProcessTransport(IngestService& service, std::uint64_t channel_id, std::string write_key, UnixMillis epoch);
  telemetry::SendResult send(const telemetry::UploadRecord& rec) override;
  telemetry::CommandPoll execute_command() override;

 private:
  IngestService& service_;
  std::uint64_t channel_id_;
  std::string write_key_;
  UnixMillis epoch_;
};

}  // namespace plantmon::ingest
