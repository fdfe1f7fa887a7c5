#pragma once

// Device-side uploader: maps frames onto the eight channel fields, buffers
// records store-and-forward, and delivers them oldest-first with bounded
// exponential backoff. Records carry a client sequence number so the
// service can drop duplicates produced by retries.

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "plantmon/clock.hpp"
#include "plantmon/controller.hpp"
#include "plantmon/domain.hpp"

namespace plantmon::telemetry {

inline constexpr std::size_t kFieldCount = 8;
using FieldSet = std::array<std::optional<double>, kFieldCount>;

// field7 values.
inline constexpr double kAlertLevelNormal = 0.0;
inline constexpr double kAlertLevelWarning = 1.0;
inline constexpr double kAlertLevelCritical = 2.0;

// 2 in WaterCritical, 1 in Fault, else 0.
double alert_level(control::Mode mode);

// field1 temp, field2 humidity, field3 soil, field4 water level,
// field5 nutrient temp, field6 pump (0/1), field7 alert level,
// field8 sampling rate (Hz).
FieldSet make_fields(const CalibratedFrame& frame, bool pump_on, control::Mode mode, double rate_hz);

struct UploadRecord {
  std::uint64_t seq = 0;
  Millis t{0};  // sample time, run-relative
  FieldSet fields{};
  friend bool operator==(const UploadRecord&, const UploadRecord&) = default;
};

struct RetryPolicy {
  int max_attempts = 5;
  Millis initial{1000};
  Millis cap{60'000};

  // Delay before retry number `retry` (0-based): initial * 2^retry, capped.
  Millis backoff(int retry) const;
};

enum class EnqueueResult : std::uint8_t { Ok, Overflow };

// Bounded FIFO, safe for one producer and one consumer on different threads.
// When full, the oldest record is evicted and counted.
class UploadBuffer {
 public:
  explicit UploadBuffer(std::size_t capacity = 4096, std::uint64_t first_seq = 1);

  EnqueueResult enqueue(Millis t, const FieldSet& fields);
  EnqueueResult enqueue_sample(const CalibratedFrame& frame, const control::ControllerState& cs, double rate_hz);
  // Re-inserts a record that already has a sequence number (journal reload).
  EnqueueResult restore(const UploadRecord& rec);

  std::optional<UploadRecord> front() const;
  // Pops the front record only if it is still `seq` (it may have been
  // evicted meanwhile).
  bool pop_front_if(std::uint64_t seq);

  std::size_t size() const;
  bool empty() const { return size() == 0; }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t evictions() const;
  std::uint64_t enqueued() const;
  std::vector<UploadRecord> snapshot() const;

 private:
  EnqueueResult push_locked(UploadRecord rec);

  mutable std::mutex mu_;
  std::deque<UploadRecord> records_;
  std::size_t capacity_;
  std::uint64_t next_seq_;
  std::uint64_t evictions_ = 0;
  std::uint64_t enqueued_ = 0;
};

enum class SendStatus : std::uint8_t { Stored, Rejected, TransportDown };

struct SendResult {
  SendStatus status = SendStatus::TransportDown;
  std::uint64_t entry_id = 0;
};

struct CommandPoll {
  bool reachable = false;
  std::optional<control::RemoteCommand> command;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual SendResult send(const UploadRecord& rec) = 0;
  // Dequeues the next pending command, if any.
  virtual CommandPoll execute_command() = 0;
};

struct UploadStats {
  std::uint64_t attempted = 0;
  std::uint64_t succeeded = 0;
  std::uint64_t retried = 0;
  std::uint64_t transport_down = 0;  // failed attempts due to an unreachable service
  std::uint64_t rejected = 0;        // failed attempts answered with 0
  bool completed = false;            // buffer drained

  UploadStats& operator+=(const UploadStats& o);
  friend bool operator==(const UploadStats&, const UploadStats&) = default;
};

// Delivers buffered records oldest-first. Each record gets up to
// policy.max_attempts tries separated by policy.backoff via clock.sleep_for;
// if all fail the record stays at the head and flush returns.
UploadStats flush(UploadBuffer& buf, Transport& transport, Clock& clock, const RetryPolicy& policy = {});

// Drains the service's command queue in order. Stops quietly when the
// transport is down.
std::vector<control::RemoteCommand> poll_commands(Transport& transport, std::size_t max_commands = 64);

// ---- offline journal -----------------------------------------------------

// CSV with header seq,t_ms,field1..field8; empty cells are absent fields.
void append_journal(const std::filesystem::path& path, std::span<const UploadRecord> records);
std::vector<UploadRecord> read_journal(const std::filesystem::path& path);

// Transport that only writes records to a local journal.
class JournalTransport final : public Transport {
 public:
  explicit JournalTransport(std::filesystem::path path) : path_(std::move(path)) {}
  SendResult send(const UploadRecord& rec) override;
  CommandPoll execute_command() override { return {true, std::nullopt}; }

 private:
  std::filesystem::path path_;
  std::uint64_t written_ = 0;
};

struct OutageWindow {
  Millis start{0};
  Millis end{0};  // exclusive
  bool contains(Millis t) const { return t >= start && t < end; }
};

// Wraps another transport with scheduled outages and random per-request
// failures. A failed request is either dropped before reaching the service
// or, with probability lost_response_fraction, delivered with its reply
// lost; the latter exercises service-side deduplication.
class FaultInjectingTransport final : public Transport {
 public:
  struct Options {
    double failure_probability = 0.0;
    double lost_response_fraction = 0.5;
    std::vector<OutageWindow> outages;
    std::uint64_t seed = 1;
  };

  FaultInjectingTransport(Transport& inner, const Clock& clock, Options opts);
  SendResult send(const UploadRecord& rec) override;
  CommandPoll execute_command() override;

  bool in_outage() const;
  std::uint64_t injected_failures() const { return injected_; }
  std::uint64_t lost_responses() const { return lost_; }

 private:
  Transport& inner_;
  const Clock& clock_;
  Options opts_;
  std::mt19937_64 rng_;
  std::uint64_t injected_ = 0;
  std::uint64_t lost_ = 0;
};

}  // namespace plantmon::telemetry
