#include <CLI11.hpp>

#include <iostream>

#include "plantmon/cli.hpp"

using namespace plantmon;

namespace {

void add_common(CLI::App* app, cli::CommonOptions& opts) {
  app->add_option_function<std::string>(
      "--config", [&](const std::string& v) { opts.config = v; }, "Scenario configuration (YAML)");
  app->add_option_function<std::uint64_t>(
      "--seed", [&](const std::uint64_t& v) { opts.seed = v; }, "Override the configured seed");
  app->add_option_function<std::string>(
      "--out", [&](const std::string& v) { opts.out = v; }, "Output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Plant monitor simulator, ingest service and device loop"};
  app.require_subcommand(0, 1);
  bool print_default = false;
  app.add_flag("--print-default-config", print_default, "Print the default scenario configuration and exit");

  cli::CommonOptions common;
  auto* simulate = app.add_subcommand("simulate", "Run one scenario in virtual time");
  add_common(simulate, common);

  auto* compare = app.add_subcommand("compare", "Run proposed, timer and manual policies on the same scenario");
  add_common(compare, common);

  cli::ServeOptions serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the ingest service");
  add_common(serve_cmd, common);
  serve_cmd->add_option("--bind", serve.bind, "host:port")->capture_default_str();
  serve_cmd->add_option("--data", serve.data, "Journal directory")->capture_default_str();
  serve_cmd->add_option("--static", serve.static_dir, "Dashboard assets served at /")->capture_default_str();
  serve_cmd->add_option("--channel", serve.channel_id, "Channel id created on first start")->capture_default_str();
  serve_cmd->add_option("--write-key", serve.write_key)->capture_default_str();
  serve_cmd->add_option("--read-key", serve.read_key)->capture_default_str();

  cli::DeviceOptions device;
  auto* device_cmd = app.add_subcommand("device", "Run the device loop in wall-clock time against a service");
  add_common(device_cmd, common);
  device_cmd->add_option("--service", device.service, "Service base URL")->capture_default_str();
  device_cmd->add_option("--channel", device.channel_id)->capture_default_str();
  device_cmd->add_option("--write-key", device.write_key)->capture_default_str();
  device_cmd->add_option("--upload-interval", device.upload_interval_s, "Seconds between uploads")
      ->capture_default_str();
  device_cmd->add_option("--duration", device.duration_s, "Seconds to run; 0 runs until interrupted")
      ->capture_default_str();
  bool quiet = false;
  device_cmd->add_flag("--no-display", quiet, "Do not print the display frames");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? cli::kExitOk : cli::kExitConfig;
  }

  if (print_default) {
    std::cout << sim::default_config_text();
    return cli::kExitOk;
  }
  if (*simulate) return cli::cmd_simulate(common, std::cout, std::cerr);
  if (*compare) return cli::cmd_compare(common, std::cout, std::cerr);
  if (*serve_cmd) return cli::cmd_serve(common, serve, std::cout, std::cerr);
  if (*device_cmd) {
    device.display = !quiet;
    return cli::cmd_device(common, device, std::cout, std::cerr);
  }
  std::cout << app.help();
  return cli::kExitConfig;
}
