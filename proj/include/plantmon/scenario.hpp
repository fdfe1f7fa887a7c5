#pragma once

// Virtual-time experiment harness: environment, sensing, controller and
// telemetry stepped in lockstep against an in-process ingest service.
//
// Configuration is a YAML document; `default_config_text()` prints the full
// schema with the committed default values. Every key is optional and
// unknown keys are errors.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "plantmon/controller.hpp"
#include "plantmon/envsim.hpp"
#include "plantmon/telemetry.hpp"

namespace plantmon::sim {

enum class InjectedFault : std::uint8_t { StuckAt, OutOfRange };

// Overrides one raw sensor reading during [start, end).
struct FaultInjection {
  Sensor sensor = Sensor::Soil;
  InjectedFault kind = InjectedFault::StuckAt;
  Millis start{0};
  Millis end{0};
  double value = 0.0;  // stuck reading; ignored for OutOfRange
};

// Enqueued at the service at time `at`; the device sees it on its next poll.
struct ScriptedCommand {
  Millis at{0};
  control::RemoteCommand command;
};

struct TelemetryConfig {
  bool enabled = true;
  Millis upload_interval{3'600'000};
  Millis command_poll_interval{60'000};
  double failure_probability = 0.0;
  double lost_response_fraction = 0.5;
  std::vector<telemetry::OutageWindow> outages;
  std::size_t buffer_capacity = 4096;
  telemetry::RetryPolicy retry;
};

enum class PolicyKind : std::uint8_t { Proposed, Timer, Manual };
std::string_view to_string(PolicyKind k);
std::optional<PolicyKind> parse_policy_kind(std::string_view s);

// Manual baseline: explicit windows when given, otherwise one watering per
// day at `daily_at` past midnight.
struct ManualSchedule {
  Millis daily_at{8LL * 3600 * 1000};
  Millis daily_duration{23LL * 60 * 1000};
  std::vector<envsim::WateringWindow> windows;
};

struct ScenarioConfig {
  Millis duration{30 * envsim::kDay};
  Millis dt{1000};
  std::uint64_t seed = 42;
  Millis warmup{envsim::kDay};
  UnixMillis start_time{1'748'736'000'000};  // 2025-06-01T00:00:00Z

  PolicyKind policy = PolicyKind::Proposed;
  // Baseline schedules, kept even when another policy is selected so that
  // compare can run all three from one file.
  envsim::TimerPolicy timer;
  ManualSchedule manual;

  Thresholds thresholds;
  envsim::SoilModel soil;
  envsim::TankModel tank;
  envsim::WeatherModel weather;
  CalibrationParams calibration;
  int stuck_after = 30;
  Millis rate_eval_interval{60'000};

  TelemetryConfig telemetry;
  std::vector<FaultInjection> faults;
  std::vector<ScriptedCommand> commands;

  std::filesystem::path output_dir = "out";
};

// The selected policy with its schedule expanded over cfg.duration.
envsim::IrrigationPolicy make_policy(const ScenarioConfig& cfg);

// Throws Error{Config} naming the offending setting.
void validate(const ScenarioConfig& cfg);

// Parses and validates a YAML document. Errors carry "<source>:<line>:<col>".
ScenarioConfig parse_config(std::string_view text, std::string_view source = "<config>");
ScenarioConfig load_config(const std::filesystem::path& path);
// The default configuration as commented YAML; parses back to ScenarioConfig{}.
std::string default_config_text();

// Same config with a different policy.
ScenarioConfig with_policy(ScenarioConfig cfg, PolicyKind policy);

struct MinuteRow {
  Millis t{0};
  double temp_c = 0.0;
  double humidity_pct = 0.0;
  double soil_pct = 0.0;
  double water_level_cm = 0.0;
  bool pump = false;
  control::Mode mode = control::Mode::Normal;
  friend bool operator==(const MinuteRow&, const MinuteRow&) = default;
};

struct RunReport {
  std::string policy;
  std::uint64_t seed = 0;
  Millis duration{0};

  double water_used_l = 0.0;
  double pump_on_s = 0.0;           // effective pumping time
  double in_band_fraction = 0.0;    // true soil moisture within thresholds, after warm-up
  double soil_min_pct = 0.0;
  double soil_max_pct = 0.0;
  bool tank_ran_dry = false;

  std::array<std::uint64_t, 4> device_alerts{};  // indexed by AlertKind
  std::uint64_t service_alerts = 0;
  std::uint64_t service_alerts_delivered = 0;
  std::uint64_t commands_applied = 0;
  std::uint64_t commands_rejected = 0;

  std::uint64_t records_enqueued = 0;
  std::uint64_t records_stored = 0;    // distinct client_seq values at the service
  std::uint64_t duplicate_entries = 0;
  std::uint64_t records_evicted = 0;
  telemetry::UploadStats uploads;

  std::vector<MinuteRow> series;

  std::uint64_t device_alert_total() const;
  // Stored / enqueued; 1 when nothing was enqueued.
  double upload_completeness() const;
  friend bool operator==(const RunReport&, const RunReport&) = default;
};

RunReport run_scenario(const ScenarioConfig& cfg);

// t_s,temp_c,humidity_pct,soil_pct,water_level_cm,pump,mode
std::string series_csv(const RunReport& r);
std::string summary_text(const RunReport& r);
std::string summary_csv(const RunReport& r);

struct Comparison {
  RunReport proposed;
  RunReport timer;
  RunReport manual;
  // 1 - proposed / manual
  double savings_ratio() const;
};

// Runs the three policies on the same seed and weather.
Comparison run_comparison(const ScenarioConfig& cfg);
std::string comparison_text(const Comparison& c);
std::string comparison_csv(const Comparison& c);

// ---- upload drill ----------------------------------------------------------

struct UploadDrillConfig {
  std::size_t records = 1000;
  Millis interval{15'000};          // spacing of record timestamps
  double failure_probability = 0.05;
  double lost_response_fraction = 0.5;
  std::vector<telemetry::OutageWindow> outages;
  telemetry::RetryPolicy retry;
  std::uint64_t seed = 42;
};

struct UploadDrillReport {
  std::uint64_t enqueued = 0;
  std::uint64_t stored_distinct = 0;
  std::uint64_t stored_entries = 0;
  std::uint64_t missing = 0;
  std::uint64_t duplicates = 0;
  bool entry_ids_dense = false;
  std::uint64_t injected_failures = 0;
  std::uint64_t lost_responses = 0;
  Millis virtual_elapsed{0};
  telemetry::UploadStats uploads;

  double completeness() const;
};

// Produces one record per interval and flushes after each, through a
// fault-injecting transport into a fresh in-process service, then drains.
UploadDrillReport run_upload_drill(const UploadDrillConfig& cfg);

}  // namespace plantmon::sim
