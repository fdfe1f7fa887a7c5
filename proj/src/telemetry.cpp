#include "plantmon/telemetry.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "plantmon/csv.hpp"

namespace plantmon::telemetry {

double alert_level(control::Mode mode) {
  switch (mode) {
    case control::Mode::WaterCritical: return kAlertLevelCritical;
    case control::Mode::Fault: return kAlertLevelWarning;
    default: return kAlertLevelNormal;
  }
}

FieldSet make_fields(const CalibratedFrame& frame, bool pump_on, control::Mode mode, double rate_hz) {
  return {frame.temp_c,
          frame.humidity_pct,
          frame.soil_moisture_pct,
          frame.water_level_cm,
          frame.nutrient_temp_c,
          pump_on ? 1.0 : 0.0,
          alert_level(mode),
          rate_hz};
}

Millis RetryPolicy::backoff(int retry) const {
  Millis d = initial;
  for (int i = 0; i < retry && d < cap; ++i) d *= 2;
  return std::min(d, cap);
}

UploadBuffer::UploadBuffer(std::size_t capacity, std::uint64_t first_seq)
    : capacity_(std::max<std::size_t>(capacity, 1)), next_seq_(first_seq) {}

EnqueueResult UploadBuffer::push_locked(UploadRecord rec) {
  ++enqueued_;
  EnqueueResult r = EnqueueResult::Ok;
  if (records_.size() >= capacity_) {
    records_.pop_front();
    ++evictions_;
    r = EnqueueResult::Overflow;
  }
  records_.push_back(std::move(rec));
  return r;
}

EnqueueResult UploadBuffer::enqueue(Millis t, const FieldSet& fields) {
  std::lock_guard lock(mu_);
  return push_locked({next_seq_++, t, fields});
}

EnqueueResult UploadBuffer::enqueue_sample(const CalibratedFrame& frame, const control::ControllerState& cs,
                                           double rate_hz) {
  return enqueue(frame.t, make_fields(frame, cs.pump, cs.mode, rate_hz));
}

EnqueueResult UploadBuffer::restore(const UploadRecord& rec) {
  std::lock_guard lock(mu_);
  next_seq_ = std::max(next_seq_, rec.seq + 1);
  return push_locked(rec);
}

std::optional<UploadRecord> UploadBuffer::front() const {
  std::lock_guard lock(mu_);
  if (records_.empty()) return std::nullopt;
  return records_.front();
}

bool UploadBuffer::pop_front_if(std::uint64_t seq) {
  std::lock_guard lock(mu_);
  if (records_.empty() || records_.front().seq != seq) return false;
  records_.pop_front();
  return true;
}

std::size_t UploadBuffer::size() const {
  std::lock_guard lock(mu_);
  return records_.size();
}

std::uint64_t UploadBuffer::evictions() const {
  std::lock_guard lock(mu_);
  return evictions_;
}

std::uint64_t UploadBuffer::enqueued() const {
  std::lock_guard lock(mu_);
  return enqueued_;
}

std::vector<UploadRecord> UploadBuffer::snapshot() const {
  std::lock_guard lock(mu_);
  return {records_.begin(), records_.end()};
}

UploadStats& UploadStats::operator+=(const UploadStats& o) {
  attempted += o.attempted;
  succeeded += o.succeeded;
  retried += o.retried;
  transport_down += o.transport_down;
  rejected += o.rejected;
  completed = o.completed;
  return *this;
}

UploadStats flush(UploadBuffer& buf, Transport& transport, Clock& clock, const RetryPolicy& policy) {
  UploadStats stats;
  const int attempts = std::max(policy.max_attempts, 1);
  while (auto rec = buf.front()) {
    bool delivered = false;
    for (int attempt = 0; attempt < attempts; ++attempt) {
      if (attempt > 0) {
        ++stats.retried;
        clock.sleep_for(policy.backoff(attempt - 1));
      }
      ++stats.attempted;
      const SendResult r = transport.send(*rec);
      if (r.status == SendStatus::Stored) {
        delivered = true;
        break;
      }
      if (r.status == SendStatus::Rejected) {
        ++stats.rejected;
      } else {
        ++stats.transport_down;
      }
    }
    if (!delivered) return stats;
    ++stats.succeeded;
    buf.pop_front_if(rec->seq);
  }
  stats.completed = true;
  return stats;
}

std::vector<control::RemoteCommand> poll_commands(Transport& transport, std::size_t max_commands) {
  std::vector<control::RemoteCommand> out;
  while (out.size() < max_commands) {
    CommandPoll p = transport.execute_command();
    if (!p.reachable || !p.command) break;
    out.push_back(std::move(*p.command));
  }
  return out;
}

namespace {

const char* kJournalHeader = "seq,t_ms,field1,field2,field3,field4,field5,field6,field7,field8";

}  // namespace

void append_journal(const std::filesystem::path& path, std::span<const UploadRecord> records) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot open journal " + path.string());
  if (fresh) out << kJournalHeader << '\n';
  for (const UploadRecord& r : records) {
    out << r.seq << ',' << r.t.count();
    for (const auto& f : r.fields) {
      out << ',';
      if (f) out << csv::format_number(*f);
    }
    out << '\n';
  }
  out.flush();
  if (!out) throw Error(ErrorCode::Io, "write failed on journal " + path.string());
}

std::vector<UploadRecord> read_journal(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::stringstream ss;
  ss << in.rdbuf();
  std::vector<UploadRecord> out;
  const auto rows = csv::parse(ss.str());
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() != 2 + kFieldCount) continue;  // torn tail line
    auto seq = csv::parse_number(row[0]);
    auto t = csv::parse_number(row[1]);
    if (!seq || !t) continue;
    UploadRecord r;
    r.seq = static_cast<std::uint64_t>(*seq);
    r.t = Millis{static_cast<std::int64_t>(*t)};
    for (std::size_t f = 0; f < kFieldCount; ++f) r.fields[f] = csv::parse_number(row[2 + f]);
    out.push_back(r);
  }
  return out;
}

SendResult JournalTransport::send(const UploadRecord& rec) {
  append_journal(path_, std::span(&rec, 1));
  return {SendStatus::Stored, ++written_};
}

FaultInjectingTransport::FaultInjectingTransport(Transport& inner, const Clock& clock, Options opts)
    : inner_(inner), clock_(clock), opts_(std::move(opts)), rng_(opts_.seed) {}

bool FaultInjectingTransport::in_outage() const {
  const Millis now = clock_.now();
  return std::any_of(opts_.outages.begin(), opts_.outages.end(), [&](const OutageWindow& w) { return w.contains(now); });
}

SendResult FaultInjectingTransport::send(const UploadRecord& rec) {
  if (in_outage()) return {SendStatus::TransportDown, 0};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (opts_.failure_probability > 0.0 && u(rng_) < opts_.failure_probability) {
    ++injected_;
    if (u(rng_) < opts_.lost_response_fraction) {
      ++lost_;
      inner_.send(rec);  // reached the service, reply lost
    }
    return {SendStatus::TransportDown, 0};
  }
  return inner_.send(rec);
}

CommandPoll FaultInjectingTransport::execute_command() {
  if (in_outage()) return {false, std::nullopt};
  return inner_.execute_command();
}

}  // namespace plantmon::telemetry
