#include "plantmon/scenario.hpp"

#include <algorithm>
#include <cstdio>
#include <memory>
#include <set>

#include "plantmon/csv.hpp"
#include "plantmon/ingest.hpp"
#include "plantmon/sensing.hpp"

namespace plantmon::sim {

namespace {

constexpr std::uint64_t kChannelId = 1;
constexpr const char* kWriteKey = "sim-write";
constexpr const char* kReadKey = "sim-read";
constexpr Millis kMinute{60'000};

void set_raw(SensorFrame& f, Sensor s, double v) {
  switch (s) {
    case Sensor::Temperature: f.temp_raw = v; break;
    case Sensor::Humidity: f.humidity_raw = v; break;
    case Sensor::Soil: f.soil_raw = v; break;
    case Sensor::Distance: f.ultrasonic_distance_cm = v; break;
    case Sensor::NutrientTemperature: f.nutrient_temp_raw = v; break;
  }
}

void inject_faults(SensorFrame& f, const std::vector<FaultInjection>& faults) {
  for (const auto& fi : faults) {
    if (f.t < fi.start || f.t >= fi.end) continue;
    if (fi.kind == InjectedFault::StuckAt) {
      set_raw(f, fi.sensor, fi.value);
    } else {
      set_raw(f, fi.sensor, raw_range(fi.sensor).hi + 100.0);
    }
  }
}

struct StoreAudit {
  std::uint64_t distinct = 0;
  std::uint64_t entries = 0;
  bool dense = true;
  std::set<std::uint64_t> seqs;
};

StoreAudit audit(const ingest::IngestService& service) {
  StoreAudit a;
  auto feed = service.read_feed(kReadKey, kChannelId);
  if (!feed.ok()) return a;
  a.entries = feed.value.entries.size();
  for (std::size_t i = 0; i < feed.value.entries.size(); ++i) {
    const auto& e = feed.value.entries[i];
    if (e.entry_id != i + 1) a.dense = false;
    if (e.client_seq) a.seqs.insert(*e.client_seq);
  }
  a.distinct = a.seqs.size();
  return a;
}

std::unique_ptr<ingest::IngestService> make_service(std::shared_ptr<VirtualClock> clock, const Thresholds& th) {
  ingest::ServiceOptions opts;
  opts.live = false;
  opts.clock = std::move(clock);
  auto svc = std::make_unique<ingest::IngestService>(opts);
  svc->create_channel(ingest::plant_channel(kChannelId, kWriteKey, kReadKey), ingest::default_rules(th));
  return svc;
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace

std::uint64_t RunReport::device_alert_total() const {
  std::uint64_t n = 0;
  for (auto c : device_alerts) n += c;
  return n;
}

double RunReport::upload_completeness() const {
  return records_enqueued == 0 ? 1.0 : static_cast<double>(records_stored) / static_cast<double>(records_enqueued);
}

RunReport run_scenario(const ScenarioConfig& cfg) {
  RunReport report;
  report.policy = std::string(to_string(cfg.policy));
  report.seed = cfg.seed;
  report.duration = cfg.duration;
  report.soil_min_pct = report.soil_max_pct = cfg.soil.s;
  if (cfg.duration == Millis{0}) return report;
  validate(cfg);

  const envsim::IrrigationPolicy policy = make_policy(cfg);
  const std::int64_t days = (cfg.duration + envsim::kDay - Millis{1}) / envsim::kDay;
  const envsim::WeatherModel weather = cfg.weather.with_daily_variation(cfg.seed, days);
  envsim::SimRng rng(cfg.seed);
  envsim::SoilModel soil = cfg.soil;
  envsim::TankModel tank = cfg.tank;

  sensing::PipelineConfig pcfg;
  pcfg.faults.stuck_after = cfg.stuck_after;
  pcfg.rate_eval_interval = cfg.rate_eval_interval;
  sensing::SensingPipeline pipeline(cfg.calibration, pcfg);

  control::ControllerState cs;
  cs.thresholds = cfg.thresholds;

  auto clock = std::make_shared<VirtualClock>();
  std::unique_ptr<ingest::IngestService> service;
  std::unique_ptr<ingest::InProcessTransport> direct;
  std::unique_ptr<telemetry::FaultInjectingTransport> transport;
  telemetry::UploadBuffer buffer(cfg.telemetry.buffer_capacity);
  if (cfg.telemetry.enabled) {
    service = make_service(clock, cfg.thresholds);
    direct = std::make_unique<ingest::InProcessTransport>(*service, kChannelId, kWriteKey, cfg.start_time);
    telemetry::FaultInjectingTransport::Options fo;
    fo.failure_probability = cfg.telemetry.failure_probability;
    fo.lost_response_fraction = cfg.telemetry.lost_response_fraction;
    fo.outages = cfg.telemetry.outages;
    fo.seed = cfg.seed + 1;
    transport = std::make_unique<telemetry::FaultInjectingTransport>(*direct, *clock, fo);
  }

  std::vector<ScriptedCommand> commands = cfg.commands;
  std::stable_sort(commands.begin(), commands.end(),
                   [](const ScriptedCommand& a, const ScriptedCommand& b) { return a.at < b.at; });
  std::size_t next_command = 0;

  auto apply = [&](const control::RemoteCommand& cmd) {
    auto r = control::apply_command(cs, cmd);
    cs = std::move(r.state);
    if (r.outcome == control::CommandOutcome::Ack) {
      ++report.commands_applied;
    } else {
      ++report.commands_rejected;
    }
  };

  auto sync_clock = [&](Millis now) {
    if (clock->now() < now) clock->set(now);
  };

  CalibratedFrame latest;
  Millis next_acquisition{0};
  Millis next_poll{0};
  bool pump = false;
  std::uint64_t in_band_steps = 0;
  std::uint64_t measured_steps = 0;

  for (Millis t{0}; t < cfg.duration; t += cfg.dt) {
    pump = envsim::policy_decide(policy, t, cs.pump);
    auto env = envsim::env_step(soil, tank, weather, pump, t, cfg.dt, rng);
    soil = env.soil;
    tank = env.tank;
    report.water_used_l += env.drawn_l;
    report.pump_on_s += env.pumped_s;
    report.tank_ran_dry = report.tank_ran_dry || env.tank_empty;
    report.soil_min_pct = std::min(report.soil_min_pct, soil.s);
    report.soil_max_pct = std::max(report.soil_max_pct, soil.s);

    const Millis now = t + cfg.dt;
    if (now > cfg.warmup) {
      ++measured_steps;
      if (soil.s >= cs.thresholds.soil_low_pct && soil.s <= cs.thresholds.soil_high_pct) ++in_band_steps;
    }

    bool raised = false;
    if (now >= next_acquisition) {
      SensorFrame raw = env.frame;
      inject_faults(raw, cfg.faults);
      auto out = pipeline.process(raw);
      latest = out.frame;
      next_acquisition = now + sensing::sample_period(out.rate_hz);
      for (const auto& req : out.alerts) {
        control::queue_alert(cs, req);
        ++report.device_alerts[static_cast<std::size_t>(req.kind)];
        raised = true;
      }
    }

    const Thresholds th = cs.thresholds;
    auto step = control::controller_step(std::move(cs), latest, th, now);
    cs = std::move(step.state);
    for (const auto& r : step.requests) {
      if (const auto* a = std::get_if<control::SendAlert>(&r)) {
        ++report.device_alerts[static_cast<std::size_t>(a->alert.kind)];
        raised = true;
      }
    }

    while (next_command < commands.size() && commands[next_command].at <= now) {
      const auto& sc = commands[next_command++];
      if (service) {
        service->enqueue_command(kWriteKey, kChannelId, sc.command);
      } else {
        apply(sc.command);
      }
    }

    if (service) {
      const bool upload_due = raised || control::should_upload(cs, now, cfg.telemetry.upload_interval);
      if (upload_due) {
        CalibratedFrame sample = latest;
        sample.t = now;
        buffer.enqueue_sample(sample, cs, pipeline.rate_hz());
        cs.last_upload_t = now;
        control::take_pending_alerts(cs);
      }
      const bool poll_due = now >= next_poll;
      if (upload_due || (poll_due && !buffer.empty())) {
        sync_clock(now);
        report.uploads += telemetry::flush(buffer, *transport, *clock, cfg.telemetry.retry);
      }
      if (poll_due) {
        next_poll = now + cfg.telemetry.command_poll_interval;
        sync_clock(now);
        for (const auto& cmd : telemetry::poll_commands(*transport)) apply(cmd);
      }
    }

    if (now % kMinute == Millis{0}) {
      MinuteRow row;
      row.t = now;
      row.temp_c = weather.temperature(now);
      row.humidity_pct = weather.humidity(now);
      row.soil_pct = soil.s;
      row.water_level_cm = tank.level_cm;
      row.pump = pump;
      row.mode = cs.mode;
      report.series.push_back(row);
    }
  }

  report.in_band_fraction =
      measured_steps == 0 ? 0.0 : static_cast<double>(in_band_steps) / static_cast<double>(measured_steps);

  if (service) {
    // final drain: keep retrying past any remaining outage
    for (int i = 0; i < 10'000 && !buffer.empty(); ++i) {
      sync_clock(cfg.duration);
      report.uploads += telemetry::flush(buffer, *transport, *clock, cfg.telemetry.retry);
      if (!buffer.empty()) clock->sleep_for(cfg.telemetry.retry.cap);
    }
    report.records_enqueued = buffer.enqueued();
    report.records_evicted = buffer.evictions();
    const StoreAudit a = audit(*service);
    report.records_stored = a.distinct;
    report.duplicate_entries = a.entries - a.distinct;
    auto alerts = service->alerts(kReadKey, kChannelId);
    report.service_alerts = alerts.value.alerts.size();
    report.service_alerts_delivered = static_cast<std::uint64_t>(
        std::count_if(alerts.value.deliveries.begin(), alerts.value.deliveries.end(),
                      [](const ingest::DeliveryLogEntry& d) { return d.status == ingest::DeliveryStatus::Delivered; }));
  }
  return report;
}

std::string series_csv(const RunReport& r) {
  std::string out = "t_s,temp_c,humidity_pct,soil_pct,water_level_cm,pump,mode\n";
  for (const auto& row : r.series) {
    out += csv::join_row({std::to_string(row.t.count() / 1000), fixed(row.temp_c, 3), fixed(row.humidity_pct, 3),
                          fixed(row.soil_pct, 4), fixed(row.water_level_cm, 4), row.pump ? "1" : "0",
                          std::string(control::to_string(row.mode))});
    out += '\n';
  }
  return out;
}

std::string summary_text(const RunReport& r) {
  std::vector<std::pair<std::string, std::string>> rows{
      {"policy", r.policy},
      {"seed", std::to_string(r.seed)},
      {"duration_days", fixed(to_seconds(r.duration) / 86400.0, 3)},
      {"water_used_l", fixed(r.water_used_l, 3)},
      {"pump_on_min", fixed(r.pump_on_s / 60.0, 2)},
      {"in_band_pct", fixed(100.0 * r.in_band_fraction, 2)},
      {"soil_range_pct", fixed(r.soil_min_pct, 2) + " .. " + fixed(r.soil_max_pct, 2)},
      {"tank_ran_dry", r.tank_ran_dry ? "yes" : "no"},
      {"alerts_device", std::to_string(r.device_alert_total())},
      {"alerts_service", std::to_string(r.service_alerts)},
      {"alerts_delivered", std::to_string(r.service_alerts_delivered)},
      {"records_enqueued", std::to_string(r.records_enqueued)},
      {"records_stored", std::to_string(r.records_stored)},
      {"upload_completeness_pct", fixed(100.0 * r.upload_completeness(), 3)},
      {"duplicate_entries", std::to_string(r.duplicate_entries)},
      {"commands_applied", std::to_string(r.commands_applied)},
      {"commands_rejected", std::to_string(r.commands_rejected)},
  };
  std::size_t width = 0;
  for (const auto& [k, v] : rows) width = std::max(width, k.size());
  std::string out;
  for (const auto& [k, v] : rows) out += k + std::string(width - k.size() + 2, ' ') + v + '\n';
  return out;
}

std::string summary_csv(const RunReport& r) {
  std::string out =
      "policy,seed,duration_s,water_used_l,pump_on_s,in_band_fraction,alerts_soil,alerts_water,alerts_fault,"
      "alerts_recovery,alerts_service,alerts_delivered,records_enqueued,records_stored,upload_completeness,"
      "duplicate_entries,commands_applied,commands_rejected\n";
  out += csv::join_row({r.policy, std::to_string(r.seed), std::to_string(r.duration.count() / 1000),
                        csv::format_number(r.water_used_l), csv::format_number(r.pump_on_s),
                        csv::format_number(r.in_band_fraction), std::to_string(r.device_alerts[0]),
                        std::to_string(r.device_alerts[1]), std::to_string(r.device_alerts[2]),
                        std::to_string(r.device_alerts[3]), std::to_string(r.service_alerts),
                        std::to_string(r.service_alerts_delivered), std::to_string(r.records_enqueued),
                        std::to_string(r.records_stored), csv::format_number(r.upload_completeness()),
                        std::to_string(r.duplicate_entries), std::to_string(r.commands_applied),
                        std::to_string(r.commands_rejected)});
  out += '\n';
  return out;
}

double Comparison::savings_ratio() const {
  return manual.water_used_l > 0.0 ? 1.0 - proposed.water_used_l / manual.water_used_l : 0.0;
}

Comparison run_comparison(const ScenarioConfig& cfg) {
  Comparison c;
  c.proposed = run_scenario(with_policy(cfg, PolicyKind::Proposed));
  c.timer = run_scenario(with_policy(cfg, PolicyKind::Timer));
  c.manual = run_scenario(with_policy(cfg, PolicyKind::Manual));
  return c;
}

std::string comparison_text(const Comparison& c) {
  std::string out = "policy     water_l  in_band_pct  pump_on_min  alerts  savings_vs_manual_pct\n";
  for (const RunReport* r : {&c.proposed, &c.timer, &c.manual}) {
    const double savings = c.manual.water_used_l > 0.0 ? 1.0 - r->water_used_l / c.manual.water_used_l : 0.0;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-9s %8.2f %12.2f %12.1f %7llu %22.1f\n", r->policy.c_str(), r->water_used_l,
                  100.0 * r->in_band_fraction, r->pump_on_s / 60.0,
                  static_cast<unsigned long long>(r->device_alert_total()), 100.0 * savings);
    out += buf;
  }
  out += "savings ratio (1 - proposed/manual): " + fixed(c.savings_ratio(), 4) + '\n';
  return out;
}

std::string comparison_csv(const Comparison& c) {
  std::string out = "policy,water_l,in_band_pct,pump_on_min,alerts,savings_vs_manual\n";
  for (const RunReport* r : {&c.proposed, &c.timer, &c.manual}) {
    const double savings = c.manual.water_used_l > 0.0 ? 1.0 - r->water_used_l / c.manual.water_used_l : 0.0;
    out += csv::join_row({r->policy, csv::format_number(r->water_used_l),
                          csv::format_number(100.0 * r->in_band_fraction), csv::format_number(r->pump_on_s / 60.0),
                          std::to_string(r->device_alert_total()), csv::format_number(savings)});
    out += '\n';
  }
  return out;
}

// ---- upload drill -------------------------------------------------------------

double UploadDrillReport::completeness() const {
  return enqueued == 0 ? 1.0 : static_cast<double>(stored_distinct) / static_cast<double>(enqueued);
}

UploadDrillReport run_upload_drill(const UploadDrillConfig& cfg) {
  auto clock = std::make_shared<VirtualClock>();
  auto service = make_service(clock, Thresholds{});
  ingest::InProcessTransport direct(*service, kChannelId, kWriteKey, UnixMillis{1'748'736'000'000});
  telemetry::FaultInjectingTransport::Options fo;
  fo.failure_probability = cfg.failure_probability;
  fo.lost_response_fraction = cfg.lost_response_fraction;
  fo.outages = cfg.outages;
  fo.seed = cfg.seed;
  telemetry::FaultInjectingTransport transport(direct, *clock, fo);
  telemetry::UploadBuffer buffer(std::max<std::size_t>(cfg.records, 1));

  UploadDrillReport r;
  for (std::size_t i = 0; i < cfg.records; ++i) {
    const Millis t = cfg.interval * static_cast<std::int64_t>(i);
    if (clock->now() < t) clock->set(t);
    telemetry::FieldSet f{};
    f[0] = static_cast<double>(i);
    buffer.enqueue(t, f);
    r.uploads += telemetry::flush(buffer, transport, *clock, cfg.retry);
  }
  for (int i = 0; i < 100'000 && !buffer.empty(); ++i) {
    clock->sleep_for(cfg.interval);
    r.uploads += telemetry::flush(buffer, transport, *clock, cfg.retry);
  }

  r.enqueued = buffer.enqueued();
  const StoreAudit a = audit(*service);
  r.stored_distinct = a.distinct;
  r.stored_entries = a.entries;
  r.duplicates = a.entries - a.distinct;
  r.entry_ids_dense = a.dense;
  for (std::uint64_t seq = 1; seq <= r.enqueued; ++seq)
    if (!a.seqs.count(seq)) ++r.missing;
  r.injected_failures = transport.injected_failures();
  r.lost_responses = transport.lost_responses();
  r.virtual_elapsed = clock->now();
  return r;
}

}  // namespace plantmon::sim
