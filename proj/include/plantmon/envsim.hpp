#pragma once

// Discrete-time stand-in for the physical plant: a single-bucket soil
// moisture model, a reservoir drained by the pump, diurnal weather, and the
// sensors that observe them. Also the irrigation policies compared against
// the closed-loop controller.
//
// Soil moisture update per step (dt in minutes):
//   s <- clamp(s + (r_pump * pump - et(T, H)) * dt, 0, 100)
//   et(T, H) = et0 * (1 + a_temp * (T - 20)) * (1 - b_hum * H / 100)

#include <cstdint>
#include <random>
#include <variant>
#include <vector>

#include "plantmon/domain.hpp"

namespace plantmon::envsim {

inline constexpr Millis kDay{24LL * 3600 * 1000};

struct SoilModel {
  double s = 70.0;            // % of field capacity
  double et0 = 0.03;          // %/min
  double a_temp = 0.03;       // 1/degC
  double b_hum = 0.5;
  double r_pump = 2.5;        // %/min while the pump runs

  // Evapotranspiration rate in %/min, never negative.
  double et(double temp_c, double humidity_pct) const;
};

struct TankModel {
  double level_cm = 45.0;
  double area_cm2 = 1500.0;
  double pump_flow_lpm = 0.0655;
  double height_cm = 50.0;

  double volume_l() const { return level_cm * area_cm2 / 1000.0; }
};

// Standard deviations of additive sensor noise.
struct SensorNoise {
  bool enabled = true;
  double temp_c = 0.5;
  double humidity_pct = 2.0;
  double distance_cm = 0.3;
  double soil_pct = 1.0;
  double nutrient_c = 0.5;
};

struct WeatherModel {
  double temp_mean_c = 24.0;
  double temp_amplitude_c = 6.0;
  double humidity_mean_pct = 60.0;
  double humidity_amplitude_pct = 15.0;
  double peak_hour = 14.0;        // hour of the daily temperature maximum
  double daily_temp_jitter_c = 1.5;
  std::vector<double> daily_offsets_c;  // per-day mean shift, see with_daily_variation
  SensorNoise noise;

  double temperature(Millis t) const;
  // Anti-correlated with temperature; clamped to [5, 100].
  double humidity(Millis t) const;
  // Reservoir temperature: damped, lagged copy of ambient.
  double nutrient_temperature(Millis t) const;

  // Draws `days` daily mean offsets from a stream seeded only by `seed`, so
  // every policy run with the same seed sees the same weather.
  WeatherModel with_daily_variation(std::uint64_t seed, std::int64_t days) const;

 private:
  double day_offset(Millis t) const;
};

// Seeded pseudo-random source for sensor noise.
class SimRng {
 public:
  explicit SimRng(std::uint64_t seed) : engine_(seed) {}
  double gaussian() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

struct EnvStepResult {
  SoilModel soil;
  TankModel tank;
  SensorFrame frame;       // observation at t + dt
  bool tank_empty = false; // pump commanded on but the reservoir could not supply a full step
  double drawn_l = 0.0;
  double pumped_s = 0.0;   // effective pump-on time, scaled by the supplied fraction
};

// Advances the plant from t to t + dt. `sensor` is the physical probe's
// characteristic used to encode soil moisture into raw counts. Exactly five
// normal variates are drawn per call, whatever the pump or noise settings.
EnvStepResult env_step(const SoilModel& soil, const TankModel& tank, const WeatherModel& weather, bool pump_on,
                       Millis t, Millis dt, SimRng& rng,
                       const CalibrationParams& sensor = CalibrationParams::factory());

// ---- irrigation policies -------------------------------------------------

struct ProposedPolicy {};

struct TimerPolicy {
  Millis period{12LL * 3600 * 1000};
  Millis duration{10LL * 60 * 1000};
};

struct WateringWindow {
  Millis start{0};
  Millis duration{0};
};

struct ManualPolicy {
  std::vector<WateringWindow> schedule;

  // One watering per day at `at` (offset from midnight) for `days` days.
  static ManualPolicy daily(Millis at, Millis duration, std::int64_t days);
};

using IrrigationPolicy = std::variant<ProposedPolicy, TimerPolicy, ManualPolicy>;

std::string_view policy_name(const IrrigationPolicy& p);

// Pump state under the policy at time t. Only the proposed policy looks at
// the controller's decision.
bool policy_decide(const IrrigationPolicy& p, Millis t, bool controller_pump);

}  // namespace plantmon::envsim
