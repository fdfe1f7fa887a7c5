#include "plantmon/controller.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace plantmon::control {

std::string_view to_string(Led l) {
  switch (l) {
    case Led::Green: return "Green";
    case Led::Yellow: return "Yellow";
    case Led::Red: return "Red";
  }
  return "?";
}

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Normal: return "Normal";
    case Mode::Irrigating: return "Irrigating";
    case Mode::WaterCritical: return "WaterCritical";
    case Mode::Fault: return "Fault";
  }
  return "?";
}

std::optional<Mode> parse_mode(std::string_view s) {
  for (auto m : {Mode::Normal, Mode::Irrigating, Mode::WaterCritical, Mode::Fault})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

std::string_view to_string(Screen s) {
  switch (s) {
    case Screen::Main: return "Main";
    case Screen::Secondary: return "Secondary";
    case Screen::Historical: return "Historical";
    case Screen::Settings: return "Settings";
  }
  return "?";
}

bool outputs_consistent(const ControllerState& cs) {
  const bool critical = cs.mode == Mode::WaterCritical;
  if (critical != (cs.led == Led::Red)) return false;
  if (cs.buzzer != (critical && !cs.buzzer_silenced)) return false;
  switch (cs.mode) {
    case Mode::Normal: return !cs.pump && cs.led == Led::Green;
    case Mode::Irrigating: return cs.pump && cs.led == Led::Yellow;
    case Mode::WaterCritical: return !cs.pump;
    case Mode::Fault: return !cs.pump && cs.led == Led::Yellow;
  }
  return false;
}

AlertEvent queue_alert(ControllerState& cs, const AlertRequest& req) {
  AlertEvent ev;
  ev.id = cs.next_alert_id++;
  ev.t = req.t;
  ev.kind = req.kind;
  ev.severity = severity_allowed(req.kind, req.severity) ? req.severity : default_severity(req.kind);
  ev.channel = default_channel(ev.severity);
  ev.payload = req.payload;
  cs.pending_alerts.push_back(ev);
  return ev;
}

std::vector<AlertEvent> take_pending_alerts(ControllerState& cs) {
  std::vector<AlertEvent> out;
  out.swap(cs.pending_alerts);
  return out;
}

namespace {

void set_outputs(ControllerState& cs, Mode mode) {
  cs.mode = mode;
  switch (mode) {
    case Mode::Normal:
      cs.pump = false;
      cs.led = Led::Green;
      cs.buzzer = false;
      break;
    case Mode::Irrigating:
      cs.pump = true;
      cs.led = Led::Yellow;
      cs.buzzer = false;
      break;
    case Mode::Fault:
      cs.pump = false;
      cs.led = Led::Yellow;
      cs.buzzer = false;
      break;
    case Mode::WaterCritical:
      cs.pump = false;
      cs.led = Led::Red;
      cs.buzzer = !cs.buzzer_silenced;
      break;
  }
}

std::string fixed1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

}  // namespace

StepResult controller_step(ControllerState cs, const CalibratedFrame& frame, const Thresholds& th, Millis now) {
  StepResult result;
  const bool was_pumping = cs.pump;
  const bool was_irrigating = cs.mode == Mode::Irrigating;
  cs.now = now;
  cs.thresholds = th;
  if (cs.manual.kind != ManualOverride::Kind::None && now >= cs.manual.until) cs.manual = {};

  const bool soil_ok = frame.ok(Sensor::Soil);
  const bool level_ok = frame.ok(Sensor::Distance);
  const double soil = frame.soil_moisture_pct;
  const bool water_critical = level_ok && frame.water_level_cm < th.water_critical_cm;

  std::vector<AlertRequest> raised;

  if (soil_ok && soil < th.soil_low_pct) {
    if (!cs.soil_alert_latched) {
      raised.push_back({now, AlertKind::SoilCritical, Severity::Warning, "soil moisture " + fixed1(soil) + "%"});
      cs.soil_alert_latched = true;
    }
  } else if (soil_ok && soil > th.soil_high_pct) {
    cs.soil_alert_latched = false;
  }

  bool demand = false;
  if (cs.manual.kind == ManualOverride::Kind::ForceOn) {
    demand = true;
  } else if (cs.manual.kind == ManualOverride::Kind::ForceOff) {
    demand = false;
  } else if (soil_ok) {
    if (soil < th.soil_low_pct) {
      demand = true;
    } else if (soil > th.soil_high_pct) {
      demand = false;
    } else {
      demand = was_irrigating;  // hysteresis band: keep the previous decision
    }
  }

  if (water_critical) {
    if (!cs.water_alarm_latched) {
      raised.push_back(
          {now, AlertKind::WaterCritical, Severity::Critical, "water level " + fixed1(frame.water_level_cm) + " cm"});
      cs.water_alarm_latched = true;
    }
    cs.manual = {};
    set_outputs(cs, Mode::WaterCritical);
  } else {
    cs.water_alarm_latched = false;
    cs.buzzer_silenced = false;
    if (!soil_ok || !level_ok) {
      cs.manual = {};
      set_outputs(cs, Mode::Fault);
    } else {
      set_outputs(cs, demand ? Mode::Irrigating : Mode::Normal);
    }
  }

  result.requests.reserve(2 + raised.size());
  result.requests.emplace_back(RefreshDisplay{});
  if (cs.pump != was_pumping) result.requests.emplace_back(SetPump{cs.pump});
  for (const AlertRequest& r : raised) result.requests.emplace_back(SendAlert{queue_alert(cs, r)});
  result.state = std::move(cs);
  return result;
}

bool should_upload(const ControllerState& cs, Millis now, Millis interval) {
  if (interval <= Millis{0}) throw std::invalid_argument("should_upload: interval must be positive");
  return now - cs.last_upload_t >= interval;
}

std::string_view to_string(Verb v) {
  switch (v) {
    case Verb::PumpOn: return "PumpOn";
    case Verb::PumpOff: return "PumpOff";
    case Verb::SetThresholds: return "SetThresholds";
    case Verb::AckAlert: return "AckAlert";
  }
  return "?";
}

std::optional<Verb> parse_verb(std::string_view s) {
  for (auto v : {Verb::PumpOn, Verb::PumpOff, Verb::SetThresholds, Verb::AckAlert})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

std::string_view to_string(CommandOutcome o) {
  switch (o) {
    case CommandOutcome::Ack: return "Ack";
    case CommandOutcome::RejectedBySafetyInterlock: return "RejectedBySafetyInterlock";
    case CommandOutcome::InvalidThresholds: return "InvalidThresholds";
  }
  return "?";
}

CommandResult apply_command(ControllerState cs, const RemoteCommand& cmd) {
  const bool pump_allowed = cs.mode == Mode::Normal || cs.mode == Mode::Irrigating;
  switch (cmd.verb) {
    case Verb::PumpOn:
      if (!pump_allowed) return {std::move(cs), CommandOutcome::RejectedBySafetyInterlock};
      cs.manual = {ManualOverride::Kind::ForceOn, cs.now + cs.manual_duration};
      set_outputs(cs, Mode::Irrigating);
      return {std::move(cs), CommandOutcome::Ack};
    case Verb::PumpOff:
      if (!pump_allowed) return {std::move(cs), CommandOutcome::RejectedBySafetyInterlock};
      cs.manual = {ManualOverride::Kind::ForceOff, cs.now + cs.manual_duration};
      set_outputs(cs, Mode::Normal);
      return {std::move(cs), CommandOutcome::Ack};
    case Verb::SetThresholds:
      if (threshold_violation(cmd.thresholds)) return {std::move(cs), CommandOutcome::InvalidThresholds};
      cs.thresholds = cmd.thresholds;
      return {std::move(cs), CommandOutcome::Ack};
    case Verb::AckAlert:
      if (cs.mode == Mode::WaterCritical) {
        cs.buzzer_silenced = true;
        cs.buzzer = false;
      }
      if (cmd.alert_id) {
        std::erase_if(cs.pending_alerts, [&](const AlertEvent& a) { return a.id == *cmd.alert_id; });
      }
      return {std::move(cs), CommandOutcome::Ack};
  }
  return {std::move(cs), CommandOutcome::Ack};
}

Screen next_screen(Screen s) {
  switch (s) {
    case Screen::Main: return Screen::Secondary;
    case Screen::Secondary: return Screen::Historical;
    case Screen::Historical: return Screen::Settings;
    case Screen::Settings: return Screen::Main;
  }
  return Screen::Main;
}

namespace {

std::string line(const char* fmt, auto... args) {
  std::string s;
  if constexpr (sizeof...(args) == 0) {
    s = fmt;
  } else {
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, args...);
    s = buf;
  }
  if (s.size() > kDisplayCols) s.resize(kDisplayCols);
  return s;
}

struct Stat {
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  std::size_t n = 0;
  void add(double v) {
    min = std::min(min, v);
    max = std::max(max, v);
    sum += v;
    ++n;
  }
  double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
};

std::string health_summary(const CalibratedFrame& f) {
  std::string faulted;
  static constexpr const char* kShort[] = {"T", "H", "S", "D", "N"};
  for (Sensor s : kAllSensors)
    if (!f.ok(s)) faulted += kShort[index(s)];
  return faulted.empty() ? "OK" : "FAULT " + faulted;
}

}  // namespace

DisplayFrame render_display(const ControllerState& cs, const CalibratedFrame& frame,
                            std::span<const CalibratedFrame> history) {
  DisplayFrame d;
  d.screen = cs.screen;
  auto& out = d.lines;
  switch (cs.screen) {
    case Screen::Main:
      out.push_back(line("[1/4] MAIN"));
      out.push_back(line("Temp : %.1f C", frame.temp_c));
      out.push_back(line("Humid: %.1f %%", frame.humidity_pct));
      out.push_back(line("Soil : %.1f %%", frame.soil_moisture_pct));
      out.push_back(line("Pump : %s", cs.pump ? "ON" : "OFF"));
      out.push_back(line("LED  : %s", std::string(to_string(cs.led)).c_str()));
      break;
    case Screen::Secondary:
      out.push_back(line("[2/4] TANK/STATUS"));
      out.push_back(line("Water: %.1f cm", frame.water_level_cm));
      out.push_back(line("NutrT: %.1f C", frame.nutrient_temp_c));
      out.push_back(line("Mode : %s", std::string(to_string(cs.mode)).c_str()));
      out.push_back(line("Buzz : %s", cs.buzzer ? "ON" : "off"));
      out.push_back(line("Sens : %s", health_summary(frame).c_str()));
      break;
    case Screen::Historical: {
      out.push_back(line("[3/4] 24H min/avg/max"));
      Stat temp, hum, soil, water;
      const Millis since = frame.t - Millis{24LL * 3600 * 1000};
      for (const CalibratedFrame& h : history) {
        if (h.t < since || h.t > frame.t) continue;
        temp.add(h.temp_c);
        hum.add(h.humidity_pct);
        soil.add(h.soil_moisture_pct);
        water.add(h.water_level_cm);
      }
      if (temp.n == 0) {
        out.push_back(line("no data"));
        break;
      }
      auto row = [&](const char* tag, const Stat& s) {
        out.push_back(line("%-2s%6.1f%6.1f%6.1f", tag, s.min, s.mean(), s.max));
      };
      row("T", temp);
      row("H", hum);
      row("S", soil);
      row("W", water);
      out.push_back(line("n=%zu", temp.n));
      break;
    }
    case Screen::Settings:
      out.push_back(line("[4/4] SETTINGS"));
      out.push_back(line("Low  : %.1f %%", cs.thresholds.soil_low_pct));
      out.push_back(line("High : %.1f %%", cs.thresholds.soil_high_pct));
      out.push_back(line("Crit : %.1f cm", cs.thresholds.water_critical_cm));
      out.push_back(line("Alert: %zu pending", cs.pending_alerts.size()));
      out.push_back(line("plantmon 1.0"));
      break;
  }
  return d;
}

std::string to_text(const DisplayFrame& d) {
  std::string s = "+" + std::string(kDisplayCols, '-') + "+\n";
  std::string text = s;
  for (std::size_t i = 0; i < kDisplayRows; ++i) {
    std::string l = i < d.lines.size() ? d.lines[i] : "";
    l.resize(kDisplayCols, ' ');
    text += "|" + l + "|\n";
  }
  return text + s;
}

}  // namespace plantmon::control
