#pragma once

// Signal pipeline between the raw sensors and the controller:
// calibration, moving-average smoothing, rate-of-change driven sampling
// and sensor fault detection with recalibration.
//
// Every stage is a pure state-transition function over a small value
// type; SensingPipeline composes them for one device.

#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "plantmon/domain.hpp"

namespace plantmon::sensing {

// ---- calibration ---------------------------------------------------------

// Applies the factory/user calibration to one raw frame. Humidity and soil
// moisture are clamped to [0, 100], water level to >= 0. All health flags
// are set to ok; fault state is layered on by the pipeline.
CalibratedFrame calibrate(const SensorFrame& raw, const CalibrationParams& p);

// Inverse of the soil normalisation: the raw count that reads as `pct`.
double soil_raw_for_percent(double pct, const CalibrationParams& p);

// ---- moving average ------------------------------------------------------

inline constexpr std::size_t kFilterWindow = 10;

struct FilterState {
  std::array<double, kFilterWindow> ring{};
  std::size_t count = 0;  // samples seen since the last reset

  std::size_t size() const { return count < kFilterWindow ? count : kFilterWindow; }
  bool empty() const { return count == 0; }
  // Mean of the buffered samples; 0 when empty.
  double mean() const;
};

// Pushes x and returns the mean of the last min(count, 10) samples.
std::pair<FilterState, double> filter_step(FilterState fs, double x);

// One filter per smoothed signal. Nutrient temperature is passed through.
struct SignalFilters {
  FilterState temperature;
  FilterState humidity;
  FilterState soil;
  FilterState water_level;

  // nullptr for sensors that are not filtered.
  FilterState* for_sensor(Sensor s);
};

// ---- adaptive sampling ---------------------------------------------------

inline constexpr double kRateFast = 1.0;
inline constexpr double kRateMedium = 0.5;
inline constexpr double kRateSlow = 0.1;

// Rate for an absolute soil-moisture change in %/min. Both thresholds are
// strict: exactly 5 or exactly 1 %/min fall through to 0.5 Hz.
double rate_for_change(double abs_delta_pct_per_min);

struct SamplerState {
  double current_rate_hz = kRateFast;
  double last_sm_pct = 0.0;
  Millis last_rate_eval_t{0};
};

// Re-evaluates the sampling rate from the soil-moisture change since the
// last evaluation. Requires t > ss.last_rate_eval_t (throws
// std::invalid_argument otherwise).
std::pair<SamplerState, double> sampler_step(SamplerState ss, double sm_pct, Millis t);

// Acquisition period for a rate produced by rate_for_change.
Millis sample_period(double rate_hz);

// ---- fault detection -----------------------------------------------------

enum class FaultState : std::uint8_t { Ok, StuckAt, OutOfRange };
std::string_view to_string(FaultState s);

struct SensorFault {
  FaultState state = FaultState::Ok;
  int identical_count = 0;  // length of the current run of identical readings
  double last_value = 0.0;
};

struct FaultStatus {
  std::array<SensorFault, kSensorCount> sensors{};

  FaultState state(Sensor s) const { return sensors[index(s)].state; }
  bool faulted(Sensor s) const { return state(s) != FaultState::Ok; }
  bool any_faulted() const;
};

struct FaultConfig {
  // Identical consecutive readings before a sensor is declared StuckAt;
  // 0 disables stuck detection.
  int stuck_after = 30;
};

struct FaultTransition {
  Millis t{0};
  Sensor sensor = Sensor::Soil;
  FaultState from = FaultState::Ok;
  FaultState to = FaultState::Ok;
  friend bool operator==(const FaultTransition&, const FaultTransition&) = default;
};

// Updates per-sensor anomaly state for one fresh raw frame. OutOfRange takes
// precedence over StuckAt. Only state changes are reported, so a persistent
// fault yields a single Ok->fault transition and a single fault->Ok one.
std::pair<FaultStatus, std::vector<FaultTransition>> check_faults(FaultStatus fstat, const SensorFrame& raw,
                                                                  const FaultConfig& cfg = {});

struct Recalibration {
  CalibrationParams params;
  SignalFilters filters;
  std::vector<Sensor> sensors;  // sensors that were reset
};

// Restores factory calibration for every faulted sensor and empties its
// filter. Throws Error{NoFaultPresent} when no sensor is faulted.
Recalibration auto_recalibrate(const CalibrationParams& p, const SignalFilters& filters, const FaultStatus& fstat,
                               const CalibrationParams& factory = CalibrationParams::factory());

// ---- composed pipeline ---------------------------------------------------

struct PipelineConfig {
  FaultConfig faults;
  Millis rate_eval_interval{60'000};
  double initial_rate_hz = kRateFast;
};

struct PipelineOutput {
  CalibratedFrame frame;
  std::vector<FaultTransition> transitions;
  std::vector<AlertRequest> alerts;
  double rate_hz = kRateFast;
};

// Calibrate -> fault check -> filter -> sampler for one device.
//
// On an Ok->fault transition the faulted sensor is recalibrated and a
// SensorFault alert is requested; when it returns to Ok exactly one Recovery
// alert is requested. Out-of-range samples are kept out of the filters.
class SensingPipeline {
 public:
  explicit SensingPipeline(CalibrationParams params = CalibrationParams::factory(), PipelineConfig cfg = {},
                           CalibrationParams factory = CalibrationParams::factory());

  PipelineOutput process(const SensorFrame& raw);

  const CalibrationParams& params() const { return params_; }
  void set_params(const CalibrationParams& p);
  const SignalFilters& filters() const { return filters_; }
  const FaultStatus& faults() const { return faults_; }
  const SamplerState& sampler() const { return sampler_; }
  double rate_hz() const { return sampler_.current_rate_hz; }

 private:
  PipelineConfig cfg_;
  CalibrationParams params_;
  CalibrationParams factory_;
  SignalFilters filters_;
  FaultStatus faults_;
  SamplerState sampler_;
  bool primed_ = false;
  std::array<bool, kSensorCount> awaiting_recovery_{};
};

}  // namespace plantmon::sensing
