#pragma once

// Shared vocabulary for the plant monitor: raw and calibrated frames,
// calibration parameters, thresholds and alert events.
//
// Unit conventions (not enforced by the type system):
//   temperatures in degrees Celsius, humidity in %RH, soil moisture in
//   percent of field capacity, lengths in centimetres, volumes in litres.
// Time is integer milliseconds since the start of a run.

#include <array>
#include <chrono>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace plantmon {

using Millis = std::chrono::milliseconds;

constexpr double to_seconds(Millis t) { return static_cast<double>(t.count()) / 1000.0; }
constexpr Millis from_seconds(double s) { return Millis{static_cast<std::int64_t>(s * 1000.0 + (s >= 0 ? 0.5 : -0.5))}; }

enum class ErrorCode {
  InvalidThresholds,
  InvalidCalibration,
  NoFaultPresent,
  Config,
  Io,
  Lock,
  Protocol,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raw ADC range of the soil probe.
inline constexpr double kSoilRawMin = 0.0;
inline constexpr double kSoilRawMax = 4095.0;
// Ultrasonic ranger limits, cm.
inline constexpr double kDistanceMinCm = 2.0;
inline constexpr double kDistanceMaxCm = 400.0;

enum class Sensor : std::uint8_t { Temperature = 0, Humidity, Soil, Distance, NutrientTemperature };
inline constexpr std::size_t kSensorCount = 5;
inline constexpr std::array<Sensor, kSensorCount> kAllSensors = {
    Sensor::Temperature, Sensor::Humidity, Sensor::Soil, Sensor::Distance, Sensor::NutrientTemperature};

std::string_view to_string(Sensor s);
constexpr std::size_t index(Sensor s) { return static_cast<std::size_t>(s); }

struct SensorFrame {
  Millis t{0};
  double temp_raw = 0.0;
  double humidity_raw = 0.0;
  double soil_raw = 0.0;  // ADC-like count, nominally [0, 4095]
  double ultrasonic_distance_cm = kDistanceMinCm;
  double nutrient_temp_raw = 0.0;

  double value(Sensor s) const;
  friend bool operator==(const SensorFrame&, const SensorFrame&) = default;
};

// Physical validity window of each sensor's raw reading.
struct SensorRange {
  double lo;
  double hi;
  bool contains(double v) const { return v >= lo && v <= hi; }
};
SensorRange raw_range(Sensor s);

using SensorHealth = std::array<bool, kSensorCount>;  // true = ok

struct CalibratedFrame {
  Millis t{0};
  double temp_c = 0.0;
  double humidity_pct = 0.0;
  double soil_moisture_pct = 0.0;
  double water_level_cm = 0.0;
  double nutrient_temp_c = 0.0;
  SensorHealth health{true, true, true, true, true};

  bool ok(Sensor s) const { return health[index(s)]; }
  friend bool operator==(const CalibratedFrame&, const CalibratedFrame&) = default;
};

struct CalibrationParams {
  double alpha_t = 0.0;          // additive temperature offset, degC
  double beta_h = 1.0;           // multiplicative humidity gain
  double sm_dry = 3000.0;        // raw count in dry soil
  double sm_wet = 1200.0;        // raw count in saturated soil
  double tank_height_cm = 50.0;  // sensor-to-tank-floor distance
  double nutrient_offset_c = 0.0;

  static CalibrationParams factory() { return {}; }
  friend bool operator==(const CalibrationParams&, const CalibrationParams&) = default;
};

// Throws Error{InvalidCalibration} naming the first violated constraint.
void validate_calibration(const CalibrationParams& p);

struct Thresholds {
  double soil_low_pct = 60.0;
  double soil_high_pct = 80.0;
  double water_critical_cm = 5.0;
  friend bool operator==(const Thresholds&, const Thresholds&) = default;
};

// Returns the violated constraint, or nullopt if the thresholds are valid.
std::optional<std::string> threshold_violation(const Thresholds& th);
// Throws Error{InvalidThresholds} naming the violated constraint.
void validate_thresholds(const Thresholds& th);

enum class AlertKind : std::uint8_t { SoilCritical, WaterCritical, SensorFault, Recovery };
enum class Severity : std::uint8_t { Warning, Critical };
enum class AlertChannel : std::uint8_t { EmailLike, SmsLike };

std::string_view to_string(AlertKind k);
std::string_view to_string(Severity s);
std::string_view to_string(AlertChannel c);
std::optional<AlertKind> parse_alert_kind(std::string_view s);
std::optional<Severity> parse_severity(std::string_view s);
std::optional<AlertChannel> parse_alert_channel(std::string_view s);

// Allowed kind/severity pairs:
//   SoilCritical  -> Warning
//   WaterCritical -> Critical
//   SensorFault   -> Warning or Critical
//   Recovery      -> Warning
bool severity_allowed(AlertKind kind, Severity severity);
Severity default_severity(AlertKind kind);
// Critical alerts go out on the SMS-like sink, warnings on the email-like one.
AlertChannel default_channel(Severity severity);

struct AlertEvent {
  std::uint64_t id = 0;
  Millis t{0};
  AlertKind kind = AlertKind::SoilCritical;
  Severity severity = Severity::Warning;
  AlertChannel channel = AlertChannel::EmailLike;
  std::string payload;
  friend bool operator==(const AlertEvent&, const AlertEvent&) = default;
};

// An alert that has been decided on but not yet numbered; the controller
// assigns ids when it queues one.
struct AlertRequest {
  Millis t{0};
  AlertKind kind = AlertKind::SoilCritical;
  Severity severity = Severity::Warning;
  std::string payload;
  friend bool operator==(const AlertRequest&, const AlertRequest&) = default;
};

}  // namespace plantmon
