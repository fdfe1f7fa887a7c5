#include <doctest.h>

#include <deque>
#include <numeric>
#include <random>
#include <tuple>

#include "plantmon/sensing.hpp"

using namespace plantmon;
using namespace plantmon::sensing;

namespace {

SensorFrame nominal(Millis t, double soil_raw = 2100.0) {
  SensorFrame f;
  f.t = t;
  f.temp_raw = 24.0;
  f.humidity_raw = 60.0;
  f.soil_raw = soil_raw;
  f.ultrasonic_distance_cm = 10.0;
  f.nutrient_temp_raw = 22.0;
  return f;
}

double brute_mean(const std::deque<double>& w) {
  return std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
}

}  // namespace

TEST_CASE("calibrate: examples") {
  auto p = CalibrationParams::factory();
  SensorFrame raw = nominal(Millis{0});
  raw.soil_raw = p.sm_dry;
  CHECK(calibrate(raw, p).soil_moisture_pct == 0.0);
  raw.soil_raw = p.sm_wet;
  CHECK(calibrate(raw, p).soil_moisture_pct == 100.0);

  raw.temp_raw = 23.7;
  raw.humidity_raw = 41.2;
  auto f = calibrate(raw, p);
  CHECK(f.temp_c == 23.7);
  CHECK(f.humidity_pct == 41.2);

  p.sm_dry = 3000;
  p.sm_wet = 1000;
  raw.soil_raw = 2000;
  CHECK(calibrate(raw, p).soil_moisture_pct == doctest::Approx(50.0).epsilon(1e-12));
}

TEST_CASE("calibrate: water level and clamping") {
  auto p = CalibrationParams::factory();
  SensorFrame raw = nominal(Millis{0});
  raw.ultrasonic_distance_cm = 12.0;
  CHECK(calibrate(raw, p).water_level_cm == doctest::Approx(38.0));
  raw.ultrasonic_distance_cm = 80.0;
  CHECK(calibrate(raw, p).water_level_cm == 0.0);
  raw.humidity_raw = 90.0;
  p.beta_h = 1.5;
  CHECK(calibrate(raw, p).humidity_pct == 100.0);
  raw.soil_raw = 4095;
  CHECK(calibrate(raw, p).soil_moisture_pct == 0.0);
  raw.soil_raw = 0;
  CHECK(calibrate(raw, p).soil_moisture_pct == 100.0);
}

TEST_CASE("calibrate: nutrient offset passes through") {
  auto p = CalibrationParams::factory();
  p.nutrient_offset_c = -0.75;
  SensorFrame raw = nominal(Millis{0});
  CHECK(calibrate(raw, p).nutrient_temp_c == doctest::Approx(21.25));
}

TEST_CASE("soil_raw_for_percent inverts the soil calibration") {
  auto p = CalibrationParams::factory();
  for (double pct = 0.0; pct <= 100.0; pct += 0.5) {
    SensorFrame raw = nominal(Millis{0}, soil_raw_for_percent(pct, p));
    CHECK(calibrate(raw, p).soil_moisture_pct == doctest::Approx(pct).epsilon(1e-12));
  }
}

TEST_CASE("filter_step: examples") {
  FilterState fs;
  for (int i = 0; i < 25; ++i) {
    auto [next, y] = filter_step(fs, 7.0);
    fs = next;
    CHECK(y == 7.0);
  }

  fs = {};
  double y = 0;
  for (int i = 1; i <= 10; ++i) std::tie(fs, y) = filter_step(fs, i);
  CHECK(y == doctest::Approx(5.5));

  fs = {};
  for (int i = 1; i <= 10; ++i) std::tie(fs, y) = filter_step(fs, 0.0);
  for (int i = 11; i <= 20; ++i) {
    std::tie(fs, y) = filter_step(fs, 100.0);
    if (i < 20) CHECK(y < 100.0);
  }
  CHECK(y == 100.0);
}

TEST_CASE("filter_step: warm-up uses partial means and the buffer never exceeds the window") {
  FilterState fs;
  double y = 0;
  std::tie(fs, y) = filter_step(fs, 4.0);
  CHECK(y == 4.0);
  std::tie(fs, y) = filter_step(fs, 8.0);
  CHECK(y == 6.0);
  for (int i = 0; i < 100; ++i) {
    std::tie(fs, y) = filter_step(fs, i);
    CHECK(fs.size() <= kFilterWindow);
  }
}

TEST_CASE("filter_step: equals a sliding-window oracle on random streams") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(50.0, 20.0);
  double worst = 0.0;
  for (int s = 0; s < 500; ++s) {
    FilterState fs;
    std::deque<double> window;
    for (int i = 0; i < 200; ++i) {
      const double x = n(rng);
      double y = 0;
      std::tie(fs, y) = filter_step(fs, x);
      window.push_back(x);
      if (window.size() > kFilterWindow) window.pop_front();
      worst = std::max(worst, std::fabs(y - brute_mean(window)));
    }
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("sampler: rate examples") {
  CHECK(rate_for_change(6.0) == kRateFast);
  CHECK(rate_for_change(0.5) == kRateSlow);
  CHECK(rate_for_change(3.0) == kRateMedium);
  CHECK(rate_for_change(5.0) == kRateMedium);
  CHECK(rate_for_change(1.0) == kRateMedium);
}

TEST_CASE("sampler_step: delta is per minute and direction-agnostic") {
  SamplerState ss{kRateFast, 70.0, Millis{0}};
  auto [a, r1] = sampler_step(ss, 64.0, Millis{60'000});
  CHECK(r1 == kRateFast);  // -6 %/min
  auto [b, r2] = sampler_step(a, 65.0, Millis{180'000});
  CHECK(r2 == kRateSlow);  // +0.5 %/min over two minutes
  CHECK(b.last_sm_pct == 65.0);
  CHECK(b.last_rate_eval_t == Millis{180'000});
  auto [c, r3] = sampler_step(b, 68.0, Millis{240'000});
  CHECK(r3 == kRateMedium);
  CHECK_THROWS_AS(sampler_step(c, 68.0, Millis{240'000}), std::invalid_argument);
}

TEST_CASE("sampler: range is exactly the three rates") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 20.0);
  for (int i = 0; i < 10000; ++i) {
    const double r = rate_for_change(u(rng));
    CHECK((r == kRateFast || r == kRateMedium || r == kRateSlow));
  }
  CHECK(sample_period(kRateFast) == Millis{1000});
  CHECK(sample_period(kRateMedium) == Millis{2000});
  CHECK(sample_period(kRateSlow) == Millis{10'000});
}

TEST_CASE("check_faults: stuck soil sensor after 30 identical readings") {
  FaultStatus fs;
  int transitions = 0;
  for (int i = 0; i < 60; ++i) {
    auto [next, tr] = check_faults(fs, nominal(Millis{i * 1000}, 2222.0));
    fs = next;
    for (const auto& t : tr)
      if (t.sensor == Sensor::Soil) {
        ++transitions;
        CHECK(t.from == FaultState::Ok);
        CHECK(t.to == FaultState::StuckAt);
        CHECK(i == 29);
      }
  }
  CHECK(transitions == 1);
  CHECK(fs.state(Sensor::Soil) == FaultState::StuckAt);
}

TEST_CASE("check_faults: out-of-range distance, edge-triggered both ways") {
  FaultStatus fs;
  FaultConfig cfg{0};
  std::vector<FaultTransition> all;
  for (int i = 0; i < 10; ++i) {
    auto raw = nominal(Millis{i * 1000});
    raw.ultrasonic_distance_cm = i < 6 ? 500.0 : 10.0 + i;
    auto [next, tr] = check_faults(fs, raw, cfg);
    fs = next;
    all.insert(all.end(), tr.begin(), tr.end());
  }
  REQUIRE(all.size() == 2);
  CHECK(all[0] == FaultTransition{Millis{0}, Sensor::Distance, FaultState::Ok, FaultState::OutOfRange});
  CHECK(all[1] == FaultTransition{Millis{6000}, Sensor::Distance, FaultState::OutOfRange, FaultState::Ok});
}

TEST_CASE("check_faults: alternating in-range readings stay Ok") {
  FaultStatus fs;
  for (int i = 0; i < 200; ++i) {
    auto raw = nominal(Millis{i * 1000}, i % 2 ? 2000.0 : 2001.0);
    raw.temp_raw = i % 2 ? 24.0 : 24.1;
    raw.humidity_raw = i % 2 ? 60.0 : 60.5;
    raw.ultrasonic_distance_cm = i % 2 ? 10.0 : 10.3;
    raw.nutrient_temp_raw = i % 2 ? 22.0 : 22.1;
    auto [next, tr] = check_faults(fs, raw);
    fs = next;
    CHECK(tr.empty());
  }
  CHECK_FALSE(fs.any_faulted());
}

TEST_CASE("check_faults: out of range takes precedence over stuck") {
  FaultStatus fs;
  auto raw = nominal(Millis{0});
  raw.ultrasonic_distance_cm = 1.0;
  for (int i = 0; i < 40; ++i) fs = check_faults(fs, raw).first;
  CHECK(fs.state(Sensor::Distance) == FaultState::OutOfRange);
}

TEST_CASE("auto_recalibrate: restores factory values and empties the filter") {
  auto factory = CalibrationParams::factory();
  CalibrationParams user = factory;
  user.sm_dry = 3300;
  user.sm_wet = 900;
  user.alpha_t = 1.5;
  SignalFilters filters;
  for (int i = 0; i < 5; ++i) {
    filters.soil = filter_step(filters.soil, 50.0).first;
    filters.temperature = filter_step(filters.temperature, 20.0).first;
  }
  FaultStatus fs;
  fs.sensors[index(Sensor::Soil)].state = FaultState::StuckAt;
  auto r = auto_recalibrate(user, filters, fs, factory);
  CHECK(r.params.sm_dry == factory.sm_dry);
  CHECK(r.params.sm_wet == factory.sm_wet);
  CHECK(r.params.alpha_t == 1.5);  // temperature sensor untouched
  CHECK(r.filters.soil.empty());
  CHECK(r.filters.temperature.size() == 5);
  REQUIRE(r.sensors.size() == 1);
  CHECK(r.sensors[0] == Sensor::Soil);
}

TEST_CASE("auto_recalibrate: no fault present") {
  try {
    auto_recalibrate(CalibrationParams::factory(), {}, FaultStatus{});
    FAIL("expected NoFaultPresent");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoFaultPresent);
  }
}

TEST_CASE("pipeline: faulted then recovered sensor yields one fault and one recovery alert") {
  SensingPipeline pipe(CalibrationParams::factory(), PipelineConfig{FaultConfig{0}});
  std::vector<AlertRequest> alerts;
  for (int i = 0; i < 120; ++i) {
    auto raw = nominal(Millis{i * 1000}, 2100.0 + (i % 3));
    if (i >= 20 && i < 60) raw.ultrasonic_distance_cm = 450.0;
    auto out = pipe.process(raw);
    alerts.insert(alerts.end(), out.alerts.begin(), out.alerts.end());
    if (i >= 20 && i < 60) {
      CHECK_FALSE(out.frame.ok(Sensor::Distance));
    } else {
      CHECK(out.frame.ok(Sensor::Distance));
    }
  }
  REQUIRE(alerts.size() == 2);
  CHECK(alerts[0].kind == AlertKind::SensorFault);
  CHECK(alerts[0].severity == Severity::Critical);
  CHECK(alerts[1].kind == AlertKind::Recovery);
  CHECK(alerts[1].t == Millis{60'000});
}

TEST_CASE("pipeline: out-of-range samples do not enter the filter") {
  SensingPipeline pipe;
  for (int i = 0; i < 10; ++i) pipe.process(nominal(Millis{i * 1000}, 2100.0 + (i % 2)));
  CHECK(pipe.filters().water_level.size() == kFilterWindow);
  for (int i = 10; i < 15; ++i) {
    auto raw = nominal(Millis{i * 1000});
    raw.ultrasonic_distance_cm = 1.0;
    auto out = pipe.process(raw);
    CHECK_FALSE(out.frame.ok(Sensor::Distance));
    // Recalibration emptied the filter and faulted samples stay out of it.
    CHECK(pipe.filters().water_level.empty());
  }
  auto good = nominal(Millis{15'000});
  auto out = pipe.process(good);
  CHECK(out.frame.ok(Sensor::Distance));
  CHECK(pipe.filters().water_level.size() == 1);
  CHECK(out.frame.water_level_cm == doctest::Approx(calibrate(good, pipe.params()).water_level_cm));
}

TEST_CASE("pipeline: recalibration resets a user calibration after a fault") {
  auto user = CalibrationParams::factory();
  user.sm_dry = 3500;
  SensingPipeline pipe(user);
  CHECK(pipe.params().sm_dry == 3500);
  auto raw = nominal(Millis{0});
  raw.soil_raw = 5000.0;
  pipe.process(raw);
  CHECK(pipe.params().sm_dry == CalibrationParams::factory().sm_dry);
}

TEST_CASE("pipeline: sampler evaluates once per minute on filtered soil") {
  auto p = CalibrationParams::factory();
  SensingPipeline pipe(p, PipelineConfig{FaultConfig{0}});
  double rate = 0;
  // soil moisture climbing 10 %/min
  for (int i = 0; i <= 60; ++i) rate = pipe.process(nominal(Millis{i * 1000}, soil_raw_for_percent(50.0 + i / 6.0, p))).rate_hz;
  CHECK(rate == kRateFast);
  CHECK(pipe.sampler().last_rate_eval_t == Millis{60'000});
  // then flat
  for (int i = 61; i <= 180; ++i) rate = pipe.process(nominal(Millis{i * 1000}, soil_raw_for_percent(60.0, p))).rate_hz;
  CHECK(rate == kRateSlow);
}
