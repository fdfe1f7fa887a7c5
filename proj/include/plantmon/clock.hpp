#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

#include "plantmon/domain.hpp"

namespace plantmon {

// Milliseconds since the Unix epoch, UTC.
using UnixMillis = Millis;

// "2025-06-01T12:00:00Z"; a ".mmm" fraction is added when non-zero.
std::string format_iso8601(UnixMillis t);
// Accepts "YYYY-MM-DDTHH:MM:SS[.fff][Z]" and the space-separated form.
std::optional<UnixMillis> parse_iso8601(std::string_view s);

// Source of "now" plus a way to wait. Virtual clocks make retry backoff and
// outage windows run in simulated time.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual Millis now() const = 0;
  virtual void sleep_for(Millis d) = 0;
};

class VirtualClock final : public Clock {
 public:
  explicit VirtualClock(Millis start = Millis{0}) : now_(start) {}
  Millis now() const override { return now_; }
  void sleep_for(Millis d) override { now_ += d; }
  void set(Millis t) { now_ = t; }

 private:
  Millis now_;
};

// Wall clock, reported as milliseconds since the Unix epoch.
class SystemClock final : public Clock {
 public:
  Millis now() const override;
  void sleep_for(Millis d) override;
};

}  // namespace plantmon
