#include "plantmon/sensing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace plantmon::sensing {

CalibratedFrame calibrate(const SensorFrame& raw, const CalibrationParams& p) {
  CalibratedFrame out;
  out.t = raw.t;
  out.temp_c = raw.temp_raw + p.alpha_t;
  out.humidity_pct = std::clamp(raw.humidity_raw * p.beta_h, 0.0, 100.0);
  out.soil_moisture_pct = std::clamp((raw.soil_raw - p.sm_dry) / (p.sm_wet - p.sm_dry) * 100.0, 0.0, 100.0);
  out.water_level_cm = std::max(p.tank_height_cm - raw.ultrasonic_distance_cm, 0.0);
  out.nutrient_temp_c = raw.nutrient_temp_raw + p.nutrient_offset_c;
  return out;
}

double soil_raw_for_percent(double pct, const CalibrationParams& p) {
  return p.sm_dry + pct / 100.0 * (p.sm_wet - p.sm_dry);
}

double FilterState::mean() const {
  const std::size_t n = size();
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += ring[i];
  return sum / static_cast<double>(n);
}

std::pair<FilterState, double> filter_step(FilterState fs, double x) {
  fs.ring[fs.count % kFilterWindow] = x;
  ++fs.count;
  const double m = fs.mean();
  return {fs, m};
}

FilterState* SignalFilters::for_sensor(Sensor s) {
  switch (s) {
    case Sensor::Temperature: return &temperature;
    case Sensor::Humidity: return &humidity;
    case Sensor::Soil: return &soil;
    case Sensor::Distance: return &water_level;
    case Sensor::NutrientTemperature: return nullptr;
  }
  return nullptr;
}

double rate_for_change(double abs_delta_pct_per_min) {
  if (abs_delta_pct_per_min > 5.0) return kRateFast;
  if (abs_delta_pct_per_min < 1.0) return kRateSlow;
  return kRateMedium;
}

std::pair<SamplerState, double> sampler_step(SamplerState ss, double sm_pct, Millis t) {
  if (t <= ss.last_rate_eval_t) throw std::invalid_argument("sampler_step: t must be after the last evaluation");
  const double minutes = static_cast<double>((t - ss.last_rate_eval_t).count()) / 60'000.0;
  const double delta = (sm_pct - ss.last_sm_pct) / minutes;
  ss.current_rate_hz = rate_for_change(std::fabs(delta));
  ss.last_sm_pct = sm_pct;
  ss.last_rate_eval_t = t;
  return {ss, ss.current_rate_hz};
}

Millis sample_period(double rate_hz) {
  if (rate_hz >= kRateFast) return Millis{1000};
  if (rate_hz >= kRateMedium) return Millis{2000};
  return Millis{10'000};
}

std::string_view to_string(FaultState s) {
  switch (s) {
    case FaultState::Ok: return "Ok";
    case FaultState::StuckAt: return "StuckAt";
    case FaultState::OutOfRange: return "OutOfRange";
  }
  return "Unknown";
}

bool FaultStatus::any_faulted() const {
  return std::any_of(sensors.begin(), sensors.end(), [](const SensorFault& f) { return f.state != FaultState::Ok; });
}

std::pair<FaultStatus, std::vector<FaultTransition>> check_faults(FaultStatus fstat, const SensorFrame& raw,
                                                                  const FaultConfig& cfg) {
  std::vector<FaultTransition> transitions;
  for (Sensor s : kAllSensors) {
    SensorFault& f = fstat.sensors[index(s)];
    const double v = raw.value(s);
    if (f.identical_count > 0 && v == f.last_value) {
      ++f.identical_count;
    } else {
      f.identical_count = 1;
      f.last_value = v;
    }

    FaultState next = FaultState::Ok;
    if (!raw_range(s).contains(v)) {
      next = FaultState::OutOfRange;
    } else if (cfg.stuck_after > 0 && f.identical_count >= cfg.stuck_after) {
      next = FaultState::StuckAt;
    }
    if (next != f.state) {
      transitions.push_back({raw.t, s, f.state, next});
      f.state = next;
    }
  }
  return {fstat, std::move(transitions)};
}

namespace {

void restore_factory(CalibrationParams& p, const CalibrationParams& factory, Sensor s) {
  switch (s) {
    case Sensor::Temperature: p.alpha_t = factory.alpha_t; break;
    case Sensor::Humidity: p.beta_h = factory.beta_h; break;
    case Sensor::Soil:
      p.sm_dry = factory.sm_dry;
      p.sm_wet = factory.sm_wet;
      break;
    case Sensor::Distance: p.tank_height_cm = factory.tank_height_cm; break;
    case Sensor::NutrientTemperature: p.nutrient_offset_c = factory.nutrient_offset_c; break;
  }
}

Severity fault_severity(Sensor s) {
  // Soil and distance feed the irrigation and tank decisions.
  return (s == Sensor::Soil || s == Sensor::Distance) ? Severity::Critical : Severity::Warning;
}

}  // namespace

Recalibration auto_recalibrate(const CalibrationParams& p, const SignalFilters& filters, const FaultStatus& fstat,
                               const CalibrationParams& factory) {
  if (!fstat.any_faulted()) throw Error(ErrorCode::NoFaultPresent, "auto_recalibrate: no sensor is faulted");
  Recalibration r{p, filters, {}};
  for (Sensor s : kAllSensors) {
    if (!fstat.faulted(s)) continue;
    restore_factory(r.params, factory, s);
    if (FilterState* fs = r.filters.for_sensor(s)) *fs = FilterState{};
    r.sensors.push_back(s);
  }
  return r;
}

SensingPipeline::SensingPipeline(CalibrationParams params, PipelineConfig cfg, CalibrationParams factory)
    : cfg_(cfg), params_(params), factory_(factory) {
  validate_calibration(params_);
  validate_calibration(factory_);
  sampler_.current_rate_hz = cfg_.initial_rate_hz;
}

void SensingPipeline::set_params(const CalibrationParams& p) {
  validate_calibration(p);
  params_ = p;
}

PipelineOutput SensingPipeline::process(const SensorFrame& raw) {
  PipelineOutput out;
  auto [status, transitions] = check_faults(faults_, raw, cfg_.faults);
  faults_ = status;

  FaultStatus newly_faulted;
  for (const FaultTransition& tr : transitions) {
    const auto i = index(tr.sensor);
    const std::string name{to_string(tr.sensor)};
    if (tr.from == FaultState::Ok) {
      newly_faulted.sensors[i].state = tr.to;
      out.alerts.push_back({raw.t, AlertKind::SensorFault, fault_severity(tr.sensor),
                            name + " sensor " + std::string(to_string(tr.to))});
    } else if (tr.to == FaultState::Ok && awaiting_recovery_[i]) {
      awaiting_recovery_[i] = false;
      out.alerts.push_back({raw.t, AlertKind::Recovery, Severity::Warning, name + " sensor recovered"});
    }
  }
  if (newly_faulted.any_faulted()) {
    Recalibration r = auto_recalibrate(params_, filters_, newly_faulted, factory_);
    params_ = r.params;
    filters_ = r.filters;
    for (Sensor s : r.sensors) awaiting_recovery_[index(s)] = true;
  }

  CalibratedFrame frame = calibrate(raw, params_);
  for (Sensor s : kAllSensors) frame.health[index(s)] = !faults_.faulted(s);

  auto smooth = [&](Sensor s, double& value) {
    FilterState* fs = filters_.for_sensor(s);
    if (faults_.state(s) == FaultState::OutOfRange) {
      if (!fs->empty()) value = fs->mean();
      return;
    }
    auto [next, y] = filter_step(*fs, value);
    *fs = next;
    value = y;
  };
  smooth(Sensor::Temperature, frame.temp_c);
  smooth(Sensor::Humidity, frame.humidity_pct);
  smooth(Sensor::Soil, frame.soil_moisture_pct);
  smooth(Sensor::Distance, frame.water_level_cm);

  if (!primed_) {
    sampler_ = SamplerState{cfg_.initial_rate_hz, frame.soil_moisture_pct, raw.t};
    primed_ = true;
  } else if (raw.t - sampler_.last_rate_eval_t >= cfg_.rate_eval_interval) {
    sampler_ = sampler_step(sampler_, frame.soil_moisture_pct, raw.t).first;
  }

  out.frame = frame;
  out.transitions = std::move(transitions);
  out.rate_hz = sampler_.current_rate_hz;
  return out;
}

}  // namespace plantmon::sensing
