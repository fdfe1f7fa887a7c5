#include "plantmon/cli.hpp"

#include <signal.h>

#include <atomic>
#include <csignal>
#include <chrono>
#include <deque>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "plantmon/http.hpp"
#include "plantmon/ingest.hpp"
#include "plantmon/sensing.hpp"

namespace plantmon::cli {

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
}

void prepare_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
}

template <class F>
int guarded(std::ostream& err, F f) {
  try {
    return f();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::Config || e.code() == ErrorCode::InvalidThresholds ||
                   e.code() == ErrorCode::InvalidCalibration
               ? kExitConfig
               : kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

// Wall clock whose sleeps end early once shutdown is requested.
class InterruptibleClock final : public Clock {
 public:
  explicit InterruptibleClock(const std::atomic<bool>& stop) : stop_(stop) {}
  Millis now() const override { return system_.now(); }
  void sleep_for(Millis d) override {
    const auto until = std::chrono::steady_clock::now() + d;
    while (!g_stop.load() && !stop_.load() && std::chrono::steady_clock::now() < until)
      std::this_thread::sleep_for(std::min<std::chrono::steady_clock::duration>(
          std::chrono::milliseconds(100), until - std::chrono::steady_clock::now()));
  }

 private:
  const std::atomic<bool>& stop_;
  SystemClock system_;
};

}  // namespace

sim::ScenarioConfig resolve_config(const CommonOptions& opts) {
  sim::ScenarioConfig cfg = opts.config ? sim::load_config(*opts.config) : sim::ScenarioConfig{};
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.out) cfg.output_dir = *opts.out;
  return cfg;
}

int cmd_simulate(const CommonOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto cfg = resolve_config(opts);
    const auto report = sim::run_scenario(cfg);
    prepare_dir(cfg.output_dir);
    write_file(cfg.output_dir / "series.csv", sim::series_csv(report));
    write_file(cfg.output_dir / "summary.txt", sim::summary_text(report));
    write_file(cfg.output_dir / "summary.csv", sim::summary_csv(report));
    out << sim::summary_text(report);
    return kExitOk;
  });
}

int cmd_compare(const CommonOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto cfg = resolve_config(opts);
    const auto cmp = sim::run_comparison(cfg);
    prepare_dir(cfg.output_dir);
    write_file(cfg.output_dir / "comparison.txt", sim::comparison_text(cmp));
    write_file(cfg.output_dir / "comparison.csv", sim::comparison_csv(cmp));
    out << sim::comparison_text(cmp);
    return kExitOk;
  });
}

int cmd_serve(const CommonOptions& opts, const ServeOptions& serve, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto cfg = resolve_config(opts);
    const auto [host, port] = http::parse_bind(serve.bind);

    ingest::ServiceOptions so;
    so.live = true;
    so.data_dir = serve.data;
    ingest::IngestService service(so);
    if (!service.channel(serve.channel_id)) {
      service.create_channel(ingest::plant_channel(serve.channel_id, serve.write_key, serve.read_key),
                             ingest::default_rules(cfg.thresholds));
    }

    // Signals are taken synchronously by a watcher thread.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    http::Server server(service, {host, port, serve.static_dir});
    const int bound = server.bind();
    out << "serving on http://" << host << ':' << bound << " (channel " << serve.channel_id << ", data "
        << serve.data.string() << ")" << std::endl;

    std::thread watcher([&] {
      int sig = 0;
      sigwait(&set, &sig);
      server.stop();
    });
    server.listen();
    if (watcher.joinable()) {
      pthread_kill(watcher.native_handle(), SIGTERM);
      watcher.join();
    }
    service.checkpoint();
    out << "stopped" << std::endl;
    return kExitOk;
  });
}

namespace {

std::vector<telemetry::UploadRecord> load_device_journal(const std::filesystem::path& path, UnixMillis epoch) {
  std::vector<telemetry::UploadRecord> recs;
  if (!std::filesystem::exists(path)) return recs;
  recs = telemetry::read_journal(path);
  for (auto& r : recs) r.t -= epoch;  // journal keeps absolute time
  return recs;
}

void save_device_journal(const std::filesystem::path& path, std::vector<telemetry::UploadRecord> recs,
                         UnixMillis epoch) {
  std::filesystem::remove(path);
  if (recs.empty()) return;
  for (auto& r : recs) r.t += epoch;
  telemetry::append_journal(path, recs);
}

}  // namespace

int cmd_device(const CommonOptions& opts, const DeviceOptions& device, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    const auto cfg = resolve_config(opts);
    if (!(device.upload_interval_s > 0.0)) throw Error(ErrorCode::Config, "upload interval must be > 0");
    prepare_dir(cfg.output_dir);
    const auto journal_path = cfg.output_dir / "device-buffer.csv";

    g_stop = false;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);

    SystemClock wall;
    const UnixMillis epoch = wall.now();
    auto restored = load_device_journal(journal_path, epoch);
    // Sequence numbers start from the wall clock so a restarted device never
    // reuses one the service has already stored.
    std::uint64_t first_seq = static_cast<std::uint64_t>(epoch.count());
    for (const auto& r : restored) first_seq = std::max(first_seq, r.seq + 1);
    telemetry::UploadBuffer buffer(cfg.telemetry.buffer_capacity, first_seq);
    for (const auto& r : restored) buffer.restore(r);
    if (!restored.empty()) out << "restored " << restored.size() << " buffered records" << std::endl;

    http::HttpTransport transport(device.service, device.channel_id, device.write_key, epoch);
    std::atomic<bool> uploader_stop{false};
    InterruptibleClock iclock(uploader_stop);
    std::mutex cmd_mu;
    std::deque<control::RemoteCommand> inbox;

    std::thread uploader([&] {
      while (!uploader_stop.load() && !g_stop.load()) {
        telemetry::flush(buffer, transport, iclock, cfg.telemetry.retry);
        auto cmds = telemetry::poll_commands(transport);
        if (!cmds.empty()) {
          std::lock_guard lock(cmd_mu);
          inbox.insert(inbox.end(), cmds.begin(), cmds.end());
        }
        iclock.sleep_for(Millis{1000});
      }
    });

    const std::int64_t days = 365;
    const auto weather = cfg.weather.with_daily_variation(cfg.seed, days);
    envsim::SimRng rng(cfg.seed);
    envsim::SoilModel soil = cfg.soil;
    envsim::TankModel tank = cfg.tank;
    sensing::PipelineConfig pcfg;
    pcfg.faults.stuck_after = cfg.stuck_after;
    pcfg.rate_eval_interval = cfg.rate_eval_interval;
    sensing::SensingPipeline pipeline(cfg.calibration, pcfg);
    control::ControllerState cs;
    cs.thresholds = cfg.thresholds;
    const envsim::IrrigationPolicy policy = sim::make_policy(cfg);
    const Millis upload_interval = from_seconds(device.upload_interval_s);
    const Millis tick{1000};

    CalibratedFrame latest;
    Millis next_acquisition{0};
    std::deque<CalibratedFrame> history;
    const auto start = std::chrono::steady_clock::now();

    for (Millis t{0}; !g_stop.load(); t += tick) {
      if (device.duration_s > 0.0 && t >= from_seconds(device.duration_s)) break;
      std::this_thread::sleep_until(start + t + tick);

      const bool pump = envsim::policy_decide(policy, t, cs.pump);
      auto env = envsim::env_step(soil, tank, weather, pump, t, tick, rng);
      soil = env.soil;
      tank = env.tank;
      const Millis now = t + tick;

      if (now >= next_acquisition) {
        auto res = pipeline.process(env.frame);
        latest = res.frame;
        next_acquisition = now + sensing::sample_period(res.rate_hz);
        for (const auto& req : res.alerts) control::queue_alert(cs, req);
      }
      {
        std::lock_guard lock(cmd_mu);
        while (!inbox.empty()) {
          auto r = control::apply_command(cs, inbox.front());
          out << "command " << inbox.front().id << ' ' << control::to_string(inbox.front().verb) << ": "
              << control::to_string(r.outcome) << std::endl;
          cs = std::move(r.state);
          inbox.pop_front();
        }
      }
      const Thresholds th = cs.thresholds;
      auto step = control::controller_step(std::move(cs), latest, th, now);
      cs = std::move(step.state);

      if (!cs.pending_alerts.empty() || control::should_upload(cs, now, upload_interval)) {
        CalibratedFrame sample = latest;
        sample.t = now;
        buffer.enqueue_sample(sample, cs, pipeline.rate_hz());
        cs.last_upload_t = now;
        control::take_pending_alerts(cs);
      }

      if (now % Millis{60'000} == Millis{0}) {
        history.push_back(latest);
        if (history.size() > 1440) history.pop_front();
      }
      if (device.display) {
        if (now % Millis{5000} == Millis{0}) cs.screen = control::next_screen(cs.screen);
        std::vector<CalibratedFrame> hist(history.begin(), history.end());
        out << control::to_text(control::render_display(cs, latest, hist)) << std::endl;
      }
    }

    uploader_stop = true;
    uploader.join();
    save_device_journal(journal_path, buffer.snapshot(), epoch);
    out << "device stopped; " << buffer.size() << " records journaled to " << journal_path.string() << std::endl;
    return kExitOk;
  });
}

}  // namespace plantmon::cli
