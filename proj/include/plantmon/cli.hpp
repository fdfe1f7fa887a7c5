#pragma once

// Entry points behind the `plantmon` command. Each returns a process exit
// code: 0 success, 2 configuration error, 3 runtime failure.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "plantmon/scenario.hpp"

namespace plantmon::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

struct CommonOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
};

// Loads the config (defaults when none is given) and applies --seed/--out.
sim::ScenarioConfig resolve_config(const CommonOptions& opts);

// Writes series.csv, summary.txt and summary.csv under the output dir and
// prints the summary.
int cmd_simulate(const CommonOptions& opts, std::ostream& out, std::ostream& err);

// Writes comparison.txt and comparison.csv and prints the table.
int cmd_compare(const CommonOptions& opts, std::ostream& out, std::ostream& err);

struct ServeOptions {
  std::string bind = "127.0.0.1:8080";
  std::filesystem::path data = "data";
  std::filesystem::path static_dir = "dashboard/dist";
  std::uint64_t channel_id = 1;
  std::string write_key = "plant-write";
  std::string read_key = "plant-read";
};

// Runs until SIGINT/SIGTERM. The channel is created on first start with
// alert rules derived from the configured thresholds.
int cmd_serve(const CommonOptions& opts, const ServeOptions& serve, std::ostream& out, std::ostream& err);

struct DeviceOptions {
  std::string service = "http://127.0.0.1:8080";
  std::uint64_t channel_id = 1;
  std::string write_key = "plant-write";
  double upload_interval_s = 15.0;
  double duration_s = 0.0;  // 0 runs until SIGINT/SIGTERM
  bool display = true;
};

// Wall-clock device loop against a running service. Records still buffered
// at shutdown are journaled to <out>/device-buffer.csv and reloaded on the
// next start.
int cmd_device(const CommonOptions& opts, const DeviceOptions& device, std::ostream& out, std::ostream& err);

}  // namespace plantmon::cli
