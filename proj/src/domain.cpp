#include "plantmon/domain.hpp"

#include <cmath>

namespace plantmon {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidThresholds: return "InvalidThresholds";
    case ErrorCode::InvalidCalibration: return "InvalidCalibration";
    case ErrorCode::NoFaultPresent: return "NoFaultPresent";
    case ErrorCode::Config: return "ConfigError";
    case ErrorCode::Io: return "IoError";
    case ErrorCode::Lock: return "LockError";
    case ErrorCode::Protocol: return "ProtocolError";
  }
  return "Unknown";
}

std::string_view to_string(Sensor s) {
  switch (s) {
    case Sensor::Temperature: return "temperature";
    case Sensor::Humidity: return "humidity";
    case Sensor::Soil: return "soil";
    case Sensor::Distance: return "distance";
    case Sensor::NutrientTemperature: return "nutrient_temperature";
  }
  return "unknown";
}

double SensorFrame::value(Sensor s) const {
  switch (s) {
    case Sensor::Temperature: return temp_raw;
    case Sensor::Humidity: return humidity_raw;
    case Sensor::Soil: return soil_raw;
    case Sensor::Distance: return ultrasonic_distance_cm;
    case Sensor::NutrientTemperature: return nutrient_temp_raw;
  }
  return 0.0;
}

SensorRange raw_range(Sensor s) {
  switch (s) {
    case Sensor::Temperature: return {-40.0, 80.0};
    case Sensor::Humidity: return {0.0, 100.0};
    case Sensor::Soil: return {kSoilRawMin, kSoilRawMax};
    case Sensor::Distance: return {kDistanceMinCm, kDistanceMaxCm};
    case Sensor::NutrientTemperature: return {-55.0, 125.0};
  }
  return {0.0, 0.0};
}

void validate_calibration(const CalibrationParams& p) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidCalibration, what); };
  if (!std::isfinite(p.sm_dry) || !std::isfinite(p.sm_wet) || p.sm_dry == p.sm_wet)
    fail("sm_wet must differ from sm_dry");
  if (!(p.beta_h > 0.0)) fail("beta_h must be > 0");
  if (!(p.tank_height_cm > 0.0)) fail("tank_height_cm must be > 0");
  if (!std::isfinite(p.alpha_t) || !std::isfinite(p.nutrient_offset_c)) fail("offsets must be finite");
}

std::optional<std::string> threshold_violation(const Thresholds& th) {
  if (!std::isfinite(th.soil_low_pct) || !std::isfinite(th.soil_high_pct) || !std::isfinite(th.water_critical_cm))
    return "thresholds must be finite";
  if (th.soil_low_pct < 0.0) return "soil_low_pct >= 0";
  if (th.soil_high_pct > 100.0) return "soil_high_pct <= 100";
  if (!(th.soil_low_pct < th.soil_high_pct)) return "soil_low_pct < soil_high_pct";
  if (th.water_critical_cm < 0.0) return "water_critical_cm >= 0";
  return std::nullopt;
}

void validate_thresholds(const Thresholds& th) {
  if (auto v = threshold_violation(th)) throw Error(ErrorCode::InvalidThresholds, "invalid thresholds: " + *v);
}

std::string_view to_string(AlertKind k) {
  switch (k) {
    case AlertKind::SoilCritical: return "SoilCritical";
    case AlertKind::WaterCritical: return "WaterCritical";
    case AlertKind::SensorFault: return "SensorFault";
    case AlertKind::Recovery: return "Recovery";
  }
  return "Unknown";
}

std::string_view to_string(Severity s) { return s == Severity::Critical ? "Critical" : "Warning"; }
std::string_view to_string(AlertChannel c) { return c == AlertChannel::SmsLike ? "SmsLike" : "EmailLike"; }

std::optional<AlertKind> parse_alert_kind(std::string_view s) {
  for (auto k : {AlertKind::SoilCritical, AlertKind::WaterCritical, AlertKind::SensorFault, AlertKind::Recovery})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

std::optional<Severity> parse_severity(std::string_view s) {
  if (s == "Warning") return Severity::Warning;
  if (s == "Critical") return Severity::Critical;
  return std::nullopt;
}

std::optional<AlertChannel> parse_alert_channel(std::string_view s) {
  if (s == "EmailLike") return AlertChannel::EmailLike;
  if (s == "SmsLike") return AlertChannel::SmsLike;
  return std::nullopt;
}

bool severity_allowed(AlertKind kind, Severity severity) {
  switch (kind) {
    case AlertKind::SoilCritical: return severity == Severity::Warning;
    case AlertKind::WaterCritical: return severity == Severity::Critical;
    case AlertKind::SensorFault: return true;
    case AlertKind::Recovery: return severity == Severity::Warning;
  }
  return false;
}

Severity default_severity(AlertKind kind) {
  return kind == AlertKind::WaterCritical ? Severity::Critical : Severity::Warning;
}

AlertChannel default_channel(Severity severity) {
  return severity == Severity::Critical ? AlertChannel::SmsLike : AlertChannel::EmailLike;
}

}  // namespace plantmon
