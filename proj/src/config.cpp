#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "plantmon/scenario.hpp"

namespace plantmon::sim {

std::string_view to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::Proposed: return "proposed";
    case PolicyKind::Timer: return "timer";
    case PolicyKind::Manual: return "manual";
  }
  return "proposed";
}

std::optional<PolicyKind> parse_policy_kind(std::string_view s) {
  for (auto k : {PolicyKind::Proposed, PolicyKind::Timer, PolicyKind::Manual})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

envsim::IrrigationPolicy make_policy(const ScenarioConfig& cfg) {
  switch (cfg.policy) {
    case PolicyKind::Proposed: return envsim::ProposedPolicy{};
    case PolicyKind::Timer: return cfg.timer;
    case PolicyKind::Manual: {
      if (!cfg.manual.windows.empty()) return envsim::ManualPolicy{cfg.manual.windows};
      const std::int64_t days = (cfg.duration + envsim::kDay - Millis{1}) / envsim::kDay;
      return envsim::ManualPolicy::daily(cfg.manual.daily_at, cfg.manual.daily_duration, days);
    }
  }
  return envsim::ProposedPolicy{};
}

ScenarioConfig with_policy(ScenarioConfig cfg, PolicyKind policy) {
  cfg.policy = policy;
  return cfg;
}

namespace {

// Raised by the validator with the dotted path of the offending setting, so
// the parser can point at its line.
struct Issue {
  std::string path;
  std::string message;
};

[[noreturn]] void issue(std::string path, std::string message) { throw Issue{std::move(path), std::move(message)}; }

void check_windows(const std::vector<telemetry::OutageWindow>& outages, Millis duration) {
  for (std::size_t i = 0; i < outages.size(); ++i) {
    const auto path = "telemetry.outages[" + std::to_string(i) + "]";
    const auto& w = outages[i];
    if (w.start < Millis{0} || w.end <= w.start) issue(path, "outage needs 0 <= start_s < end_s");
    if (w.start >= duration) issue(path, "outage must start before the end of the run");
    for (std::size_t j = 0; j < i; ++j)
      if (w.start < outages[j].end && outages[j].start < w.end)
        issue(path, "overlaps outage " + std::to_string(j));
  }
}

void validate_impl(const ScenarioConfig& cfg) {
  if (cfg.duration <= Millis{0}) issue("duration_s", "duration must be > 0");
  if (cfg.dt <= Millis{0} || cfg.dt > Millis{60'000} || 60'000 % cfg.dt.count() != 0)
    issue("dt_s", "dt must divide 60 s");
  if (cfg.duration % cfg.dt != Millis{0}) issue("duration_s", "duration must be a multiple of dt");
  if (cfg.warmup < Millis{0} || cfg.warmup >= cfg.duration) issue("warmup_s", "warm-up must lie in [0, duration)");
  if (auto v = threshold_violation(cfg.thresholds)) issue("thresholds", *v);
  try {
    validate_calibration(cfg.calibration);
  } catch (const Error& e) {
    issue("calibration", e.what());
  }
  if (cfg.timer.period <= Millis{0} || cfg.timer.duration < Millis{0} || cfg.timer.duration > cfg.timer.period)
    issue("policy.timer", "timer needs period_s > 0 and 0 <= duration_s <= period_s");
  if (cfg.manual.daily_at < Millis{0} || cfg.manual.daily_at >= envsim::kDay || cfg.manual.daily_duration < Millis{0})
    issue("policy.manual", "daily_at_s must lie within a day and duration_s >= 0");
  for (std::size_t i = 0; i < cfg.manual.windows.size(); ++i)
    if (cfg.manual.windows[i].start < Millis{0} || cfg.manual.windows[i].duration < Millis{0})
      issue("policy.manual.schedule[" + std::to_string(i) + "]", "windows need start_s >= 0 and duration_s >= 0");

  const auto& s = cfg.soil;
  if (s.s < 0.0 || s.s > 100.0) issue("soil.initial_pct", "must lie in [0, 100]");
  if (s.et0 < 0.0 || s.r_pump < 0.0 || s.b_hum < 0.0 || s.b_hum > 1.0)
    issue("soil", "et0 and r_pump must be >= 0, b_hum in [0, 1]");
  const auto& t = cfg.tank;
  if (!(t.area_cm2 > 0.0) || !(t.height_cm > 0.0) || t.pump_flow_lpm < 0.0 || t.level_cm < 0.0 ||
      t.level_cm > t.height_cm)
    issue("tank", "need area_cm2 > 0, height_cm > 0, pump_flow_lpm >= 0, 0 <= initial_level_cm <= height_cm");
  const auto& n = cfg.weather.noise;
  if (n.temp_c < 0.0 || n.humidity_pct < 0.0 || n.distance_cm < 0.0 || n.soil_pct < 0.0 || n.nutrient_c < 0.0)
    issue("noise", "standard deviations must be >= 0");
  if (cfg.weather.peak_hour < 0.0 || cfg.weather.peak_hour >= 24.0) issue("weather.peak_hour", "must lie in [0, 24)");
  if (cfg.stuck_after < 0) issue("sensing.stuck_after", "must be >= 0");
  if (cfg.rate_eval_interval <= Millis{0}) issue("sensing.rate_eval_interval_s", "must be > 0");

  const auto& tc = cfg.telemetry;
  if (tc.upload_interval <= Millis{0}) issue("telemetry.upload_interval_s", "must be > 0");
  if (tc.command_poll_interval <= Millis{0}) issue("telemetry.command_poll_interval_s", "must be > 0");
  if (tc.failure_probability < 0.0 || tc.failure_probability > 1.0)
    issue("telemetry.failure_probability", "must lie in [0, 1]");
  if (tc.lost_response_fraction < 0.0 || tc.lost_response_fraction > 1.0)
    issue("telemetry.lost_response_fraction", "must lie in [0, 1]");
  if (tc.buffer_capacity == 0) issue("telemetry.buffer_capacity", "must be > 0");
  if (tc.retry.max_attempts < 1 || tc.retry.initial < Millis{0} || tc.retry.cap < tc.retry.initial)
    issue("telemetry.retry", "need max_attempts >= 1 and 0 <= initial_s <= cap_s");
  check_windows(tc.outages, cfg.duration);

  for (std::size_t i = 0; i < cfg.faults.size(); ++i) {
    const auto& f = cfg.faults[i];
    if (f.start < Millis{0} || f.end <= f.start) issue("faults[" + std::to_string(i) + "]", "need 0 <= start_s < end_s");
  }
  for (std::size_t i = 0; i < cfg.commands.size(); ++i) {
    const auto& c = cfg.commands[i];
    const auto path = "commands[" + std::to_string(i) + "]";
    if (c.at < Millis{0} || c.at >= cfg.duration) issue(path, "at_s must lie in [0, duration)");
    if (c.command.verb == control::Verb::SetThresholds)
      if (auto v = threshold_violation(c.command.thresholds)) issue(path, *v);
  }
}

// ---- YAML reading -----------------------------------------------------------

class Reader {
 public:
  Reader(std::string source, std::map<std::string, YAML::Mark>& marks) : source_(std::move(source)), marks_(marks) {}

  [[noreturn]] void fail(const YAML::Mark& m, const std::string& msg) const {
    std::ostringstream os;
    os << source_;
    if (!m.is_null()) os << ':' << m.line + 1 << ':' << m.column + 1;
    os << ": " << msg;
    throw Error(ErrorCode::Config, os.str());
  }

  // A mapping section; every key must be consumed before finish().
  class Section {
   public:
    Section(Reader& r, YAML::Node node, std::string path) : r_(r), node_(std::move(node)), path_(std::move(path)) {
      if (node_ && !node_.IsNull() && !node_.IsMap()) r_.fail(node_.Mark(), where() + " must be a mapping");
      if (node_) r_.marks_[path_] = node_.Mark();
    }

    bool has(const char* key) const { return node_ && node_.IsMap() && node_[key]; }

    YAML::Node child(const char* key) {
      used_.insert(key);
      if (!node_ || !node_.IsMap()) return YAML::Node(YAML::NodeType::Undefined);
      const YAML::Node& map = node_;
      YAML::Node c = map[key];
      if (c) r_.marks_[join(key)] = c.Mark();
      return c;
    }

    template <class T>
    void get(const char* key, T& out) {
      YAML::Node c = child(key);
      if (!c) return;
      try {
        out = c.as<T>();
      } catch (const YAML::Exception&) {
        r_.fail(c.Mark(), join(key) + ": expected " + type_name<T>());
      }
    }

    void seconds(const char* key, Millis& out) {
      double s = to_seconds(out);
      get(key, s);
      if (!std::isfinite(s)) r_.fail(child(key).Mark(), join(key) + " must be finite");
      out = from_seconds(s);
    }

    void finish() const {
      if (!node_ || !node_.IsMap()) return;
      for (const auto& kv : node_) {
        const auto key = kv.first.as<std::string>();
        if (!used_.count(key)) r_.fail(kv.first.Mark(), "unknown key '" + join(key) + "'");
      }
    }

    std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    std::string where() const { return path_.empty() ? "document" : "'" + path_ + "'"; }

   private:
    template <class T>
    static std::string type_name() {
      if constexpr (std::is_same_v<T, bool>) return "true or false";
      else if constexpr (std::is_integral_v<T>) return "an integer";
      else if constexpr (std::is_floating_point_v<T>) return "a number";
      else return "a string";
    }

    Reader& r_;
    YAML::Node node_;
    std::string path_;
    std::set<std::string> used_;
  };

  // Iterates a sequence of mappings.
  template <class F>
  void each(Section& parent, const char* key, F f) {
    YAML::Node seq = parent.child(key);
    if (!seq || seq.IsNull()) return;
    if (!seq.IsSequence()) fail(seq.Mark(), parent.join(key) + " must be a list");
    for (std::size_t i = 0; i < seq.size(); ++i) {
      Section item(*this, seq[i], parent.join(key) + "[" + std::to_string(i) + "]");
      f(item, seq[i].Mark());
      item.finish();
    }
  }

  std::string source_;
  std::map<std::string, YAML::Mark>& marks_;
};

std::optional<Sensor> parse_sensor(std::string_view s) {
  for (Sensor x : kAllSensors)
    if (to_string(x) == s) return x;
  return std::nullopt;
}

void read_thresholds(Reader::Section& s, Thresholds& th) {
  s.get("soil_low_pct", th.soil_low_pct);
  s.get("soil_high_pct", th.soil_high_pct);
  s.get("water_critical_cm", th.water_critical_cm);
}

ScenarioConfig read_document(Reader& r, const YAML::Node& root) {
  ScenarioConfig cfg;
  Reader::Section top(r, root, "");
  top.seconds("duration_s", cfg.duration);
  top.seconds("dt_s", cfg.dt);
  top.get("seed", cfg.seed);
  top.seconds("warmup_s", cfg.warmup);
  if (auto n = top.child("start_time")) {
    auto t = parse_iso8601(n.as<std::string>(""));
    if (!t) r.fail(n.Mark(), "start_time must be an ISO-8601 UTC timestamp");
    cfg.start_time = *t;
  }

  {
    Reader::Section p(r, top.child("policy"), "policy");
    if (auto n = p.child("kind")) {
      auto k = parse_policy_kind(n.as<std::string>(""));
      if (!k) r.fail(n.Mark(), "policy.kind must be proposed, timer or manual");
      cfg.policy = *k;
    }
    Reader::Section timer(r, p.child("timer"), "policy.timer");
    timer.seconds("period_s", cfg.timer.period);
    timer.seconds("duration_s", cfg.timer.duration);
    timer.finish();
    Reader::Section manual(r, p.child("manual"), "policy.manual");
    manual.seconds("daily_at_s", cfg.manual.daily_at);
    manual.seconds("duration_s", cfg.manual.daily_duration);
    r.each(manual, "schedule", [&](Reader::Section& w, const YAML::Mark&) {
      envsim::WateringWindow win;
      w.seconds("start_s", win.start);
      w.seconds("duration_s", win.duration);
      cfg.manual.windows.push_back(win);
    });
    manual.finish();
    p.finish();
  }

  {
    Reader::Section th(r, top.child("thresholds"), "thresholds");
    read_thresholds(th, cfg.thresholds);
    th.finish();
  }
  {
    Reader::Section s(r, top.child("soil"), "soil");
    s.get("initial_pct", cfg.soil.s);
    s.get("et0", cfg.soil.et0);
    s.get("a_temp", cfg.soil.a_temp);
    s.get("b_hum", cfg.soil.b_hum);
    s.get("r_pump", cfg.soil.r_pump);
    s.finish();
  }
  {
    Reader::Section t(r, top.child("tank"), "tank");
    t.get("initial_level_cm", cfg.tank.level_cm);
    t.get("area_cm2", cfg.tank.area_cm2);
    t.get("pump_flow_lpm", cfg.tank.pump_flow_lpm);
    t.get("height_cm", cfg.tank.height_cm);
    t.finish();
  }
  {
    Reader::Section w(r, top.child("weather"), "weather");
    w.get("temp_mean_c", cfg.weather.temp_mean_c);
    w.get("temp_amplitude_c", cfg.weather.temp_amplitude_c);
    w.get("humidity_mean_pct", cfg.weather.humidity_mean_pct);
    w.get("humidity_amplitude_pct", cfg.weather.humidity_amplitude_pct);
    w.get("peak_hour", cfg.weather.peak_hour);
    w.get("daily_temp_jitter_c", cfg.weather.daily_temp_jitter_c);
    w.finish();
  }
  {
    Reader::Section n(r, top.child("noise"), "noise");
    auto& nz = cfg.weather.noise;
    n.get("enabled", nz.enabled);
    n.get("temp_c", nz.temp_c);
    n.get("humidity_pct", nz.humidity_pct);
    n.get("distance_cm", nz.distance_cm);
    n.get("soil_pct", nz.soil_pct);
    n.get("nutrient_c", nz.nutrient_c);
    n.finish();
  }
  {
    Reader::Section c(r, top.child("calibration"), "calibration");
    auto& p = cfg.calibration;
    c.get("alpha_t", p.alpha_t);
    c.get("beta_h", p.beta_h);
    c.get("sm_dry", p.sm_dry);
    c.get("sm_wet", p.sm_wet);
    c.get("tank_height_cm", p.tank_height_cm);
    c.get("nutrient_offset_c", p.nutrient_offset_c);
    c.finish();
  }
  {
    Reader::Section s(r, top.child("sensing"), "sensing");
    s.get("stuck_after", cfg.stuck_after);
    s.seconds("rate_eval_interval_s", cfg.rate_eval_interval);
    s.finish();
  }
  {
    Reader::Section t(r, top.child("telemetry"), "telemetry");
    auto& tc = cfg.telemetry;
    t.get("enabled", tc.enabled);
    t.seconds("upload_interval_s", tc.upload_interval);
    t.seconds("command_poll_interval_s", tc.command_poll_interval);
    t.get("failure_probability", tc.failure_probability);
    t.get("lost_response_fraction", tc.lost_response_fraction);
    t.get("buffer_capacity", tc.buffer_capacity);
    Reader::Section retry(r, t.child("retry"), "telemetry.retry");
    retry.get("max_attempts", tc.retry.max_attempts);
    retry.seconds("initial_s", tc.retry.initial);
    retry.seconds("cap_s", tc.retry.cap);
    retry.finish();
    r.each(t, "outages", [&](Reader::Section& o, const YAML::Mark&) {
      telemetry::OutageWindow w;
      o.seconds("start_s", w.start);
      o.seconds("end_s", w.end);
      tc.outages.push_back(w);
    });
    t.finish();
  }
  r.each(top, "faults", [&](Reader::Section& f, const YAML::Mark& mark) {
    FaultInjection fi;
    std::string sensor = "soil", kind = "stuck";
    f.get("sensor", sensor);
    f.get("kind", kind);
    auto s = parse_sensor(sensor);
    if (!s) r.fail(mark, "unknown sensor '" + sensor + "'");
    fi.sensor = *s;
    if (kind == "stuck") {
      fi.kind = InjectedFault::StuckAt;
    } else if (kind == "out_of_range") {
      fi.kind = InjectedFault::OutOfRange;
    } else {
      r.fail(mark, "fault kind must be stuck or out_of_range");
    }
    f.seconds("start_s", fi.start);
    f.seconds("end_s", fi.end);
    f.get("value", fi.value);
    cfg.faults.push_back(fi);
  });
  r.each(top, "commands", [&](Reader::Section& c, const YAML::Mark& mark) {
    ScriptedCommand sc;
    c.seconds("at_s", sc.at);
    std::string verb;
    c.get("verb", verb);
    auto v = control::parse_verb(verb);
    if (!v) r.fail(mark, "verb must be PumpOn, PumpOff, SetThresholds or AckAlert");
    sc.command.verb = *v;
    read_thresholds(c, sc.command.thresholds);
    if (c.has("alert_id")) {
      std::uint64_t id = 0;
      c.get("alert_id", id);
      sc.command.alert_id = id;
    }
    cfg.commands.push_back(sc);
  });
  {
    Reader::Section o(r, top.child("output"), "output");
    std::string dir = cfg.output_dir.string();
    o.get("dir", dir);
    cfg.output_dir = dir;
    o.finish();
  }
  top.finish();
  return cfg;
}

}  // namespace

void validate(const ScenarioConfig& cfg) {
  try {
    validate_impl(cfg);
  } catch (const Issue& i) {
    throw Error(ErrorCode::Config, i.path + ": " + i.message);
  }
}

ScenarioConfig parse_config(std::string_view text, std::string_view source) {
  std::map<std::string, YAML::Mark> marks;
  Reader reader{std::string(source), marks};
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    reader.fail(e.mark, e.msg);
  }
  ScenarioConfig cfg = read_document(reader, root);
  try {
    validate_impl(cfg);
  } catch (const Issue& i) {
    // point at the closest configured ancestor of the offending setting
    std::string path = i.path;
    while (!path.empty() && !marks.count(path)) {
      const auto cut = path.find_last_of(".[");
      path = cut == std::string::npos ? "" : path.substr(0, cut);
    }
    reader.fail(path.empty() ? YAML::Mark::null_mark() : marks[path], i.path + ": " + i.message);
  }
  return cfg;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Config, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string default_config_text() {
  return R"(# plantmon scenario configuration. Every key is optional; the values below
# are the defaults. Times are in seconds of simulated time.

duration_s: 2592000        # 30 days
dt_s: 1                    # integration step, must divide 60
seed: 42
warmup_s: 86400            # excluded from the in-band fraction
start_time: "2025-06-01T00:00:00Z"

policy:
  kind: proposed           # proposed | timer | manual
  timer:
    period_s: 43200        # every 12 h
    duration_s: 600        # for 10 min
  manual:
    daily_at_s: 28800      # 08:00
    duration_s: 1380       # 23 min
    schedule: []           # explicit [{start_s, duration_s}] windows replace the daily watering

thresholds:
  soil_low_pct: 60
  soil_high_pct: 80
  water_critical_cm: 5

soil:                      # bucket model, rates in %/min
  initial_pct: 70
  et0: 0.03
  a_temp: 0.03             # per degC above 20
  b_hum: 0.5
  r_pump: 2.5

tank:
  initial_level_cm: 45
  area_cm2: 1500
  pump_flow_lpm: 0.0655
  height_cm: 50

weather:
  temp_mean_c: 24
  temp_amplitude_c: 6
  humidity_mean_pct: 60
  humidity_amplitude_pct: 15
  peak_hour: 14
  daily_temp_jitter_c: 1.5 # std-dev of the per-day mean shift

noise:                     # additive Gaussian sensor noise, std-devs
  enabled: true
  temp_c: 0.5
  humidity_pct: 2
  distance_cm: 0.3
  soil_pct: 1
  nutrient_c: 0.5

calibration:               # device-side calibration
  alpha_t: 0
  beta_h: 1
  sm_dry: 3000
  sm_wet: 1200
  tank_height_cm: 50
  nutrient_offset_c: 0

sensing:
  stuck_after: 30          # identical readings before StuckAt; 0 disables
  rate_eval_interval_s: 60

telemetry:
  enabled: true
  upload_interval_s: 3600
  command_poll_interval_s: 60
  failure_probability: 0
  lost_response_fraction: 0.5
  buffer_capacity: 4096
  retry:
    max_attempts: 5
    initial_s: 1
    cap_s: 60
  outages: []              # [{start_s, end_s}], non-overlapping

faults: []                 # [{sensor, kind: stuck|out_of_range, start_s, end_s, value}]
commands: []               # [{at_s, verb, soil_low_pct, soil_high_pct, water_critical_cm, alert_id}]

output:
  dir: out
)";
}

}  // namespace plantmon::sim
