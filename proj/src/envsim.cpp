#include "plantmon/envsim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "plantmon/sensing.hpp"

namespace plantmon::envsim {

double SoilModel::et(double temp_c, double humidity_pct) const {
  const double rate = et0 * (1.0 + a_temp * (temp_c - 20.0)) * (1.0 - b_hum * humidity_pct / 100.0);
  return std::max(rate, 0.0);
}

namespace {

double diurnal_phase(Millis t, double peak_hour) {
  // sin(phase) peaks at peak_hour.
  const double hours = static_cast<double>(t.count()) / 3'600'000.0;
  return 2.0 * std::numbers::pi * (hours - (peak_hour - 6.0)) / 24.0;
}

}  // namespace

double WeatherModel::day_offset(Millis t) const {
  if (daily_offsets_c.empty() || t < Millis{0}) return 0.0;
  const auto day = static_cast<std::size_t>(t / kDay);
  return day < daily_offsets_c.size() ? daily_offsets_c[day] : daily_offsets_c.back();
}

double WeatherModel::temperature(Millis t) const {
  return temp_mean_c + day_offset(t) + temp_amplitude_c * std::sin(diurnal_phase(t, peak_hour));
}

double WeatherModel::humidity(Millis t) const {
  const double h =
      humidity_mean_pct - 2.0 * day_offset(t) - humidity_amplitude_pct * std::sin(diurnal_phase(t, peak_hour));
  return std::clamp(h, 5.0, 100.0);
}

double WeatherModel::nutrient_temperature(Millis t) const {
  return temp_mean_c + day_offset(t) +
         0.4 * temp_amplitude_c * std::sin(diurnal_phase(t, peak_hour) - std::numbers::pi / 4.0);
}

WeatherModel WeatherModel::with_daily_variation(std::uint64_t seed, std::int64_t days) const {
  WeatherModel w = *this;
  w.daily_offsets_c.clear();
  // Separate stream from sensor noise.
  SimRng rng(seed ^ 0x9E3779B97F4A7C15ULL);
  for (std::int64_t d = 0; d < std::max<std::int64_t>(days, 1); ++d)
    w.daily_offsets_c.push_back(daily_temp_jitter_c * rng.gaussian());
  return w;
}

EnvStepResult env_step(const SoilModel& soil, const TankModel& tank, const WeatherModel& weather, bool pump_on,
                       Millis t, Millis dt, SimRng& rng, const CalibrationParams& sensor) {
  EnvStepResult r{soil, tank, {}, false, 0.0, 0.0};
  const double minutes = static_cast<double>(dt.count()) / 60'000.0;

  double supplied = 0.0;  // fraction of a full step of pumping
  if (pump_on) {
    const double want = tank.pump_flow_lpm * minutes;
    const double have = tank.volume_l();
    if (have >= want) {
      r.drawn_l = want;
      supplied = 1.0;
    } else {
      r.drawn_l = std::max(have, 0.0);
      supplied = want > 0.0 ? r.drawn_l / want : 0.0;
      r.tank_empty = true;
    }
    r.tank.level_cm = std::max(tank.level_cm - r.drawn_l * 1000.0 / tank.area_cm2, 0.0);
    r.pumped_s = supplied * static_cast<double>(dt.count()) / 1000.0;
  }

  const double temp = weather.temperature(t);
  const double hum = weather.humidity(t);
  r.soil.s = std::clamp(soil.s + (soil.r_pump * supplied - soil.et(temp, hum)) * minutes, 0.0, 100.0);

  const Millis t1 = t + dt;
  const SensorNoise& n = weather.noise;
  const double scale = n.enabled ? 1.0 : 0.0;
  const double z_temp = rng.gaussian() * scale;
  const double z_hum = rng.gaussian() * scale;
  const double z_soil = rng.gaussian() * scale;
  const double z_dist = rng.gaussian() * scale;
  const double z_nutr = rng.gaussian() * scale;

  SensorFrame& f = r.frame;
  f.t = t1;
  f.temp_raw = weather.temperature(t1) + n.temp_c * z_temp;
  f.humidity_raw = std::clamp(weather.humidity(t1) + n.humidity_pct * z_hum, 0.0, 100.0);
  const double counts_per_pct = std::fabs(sensor.sm_wet - sensor.sm_dry) / 100.0;
  f.soil_raw = std::clamp(sensing::soil_raw_for_percent(r.soil.s, sensor) + n.soil_pct * counts_per_pct * z_soil,
                          kSoilRawMin, kSoilRawMax);
  f.ultrasonic_distance_cm =
      std::clamp(r.tank.height_cm - r.tank.level_cm + n.distance_cm * z_dist, kDistanceMinCm, kDistanceMaxCm);
  f.nutrient_temp_raw = weather.nutrient_temperature(t1) + n.nutrient_c * z_nutr;
  return r;
}

ManualPolicy ManualPolicy::daily(Millis at, Millis duration, std::int64_t days) {
  ManualPolicy p;
  for (std::int64_t d = 0; d < days; ++d) p.schedule.push_back({kDay * d + at, duration});
  return p;
}

std::string_view policy_name(const IrrigationPolicy& p) {
  struct {
    std::string_view operator()(const ProposedPolicy&) const { return "proposed"; }
    std::string_view operator()(const TimerPolicy&) const { return "timer"; }
    std::string_view operator()(const ManualPolicy&) const { return "manual"; }
  } visitor;
  return std::visit(visitor, p);
}

bool policy_decide(const IrrigationPolicy& p, Millis t, bool controller_pump) {
  struct {
    Millis t;
    bool controller_pump;
    bool operator()(const ProposedPolicy&) const { return controller_pump; }
    bool operator()(const TimerPolicy& tp) const {
      if (tp.period <= Millis{0} || t < Millis{0}) return false;
      return t % tp.period < tp.duration;
    }
    bool operator()(const ManualPolicy& mp) const {
      return std::any_of(mp.schedule.begin(), mp.schedule.end(),
                         [&](const WateringWindow& w) { return t >= w.start && t < w.start + w.duration; });
    }
  } visitor{t, controller_pump};
  return std::visit(visitor, p);
}

}  // namespace plantmon::envsim
