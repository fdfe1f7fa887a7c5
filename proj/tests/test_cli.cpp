#include <doctest.h>

#include <fstream>
#include <sstream>

#include "plantmon/cli.hpp"
#include "temp_dir.hpp"

using namespace plantmon;
using namespace plantmon::cli;

namespace {

std::filesystem::path write_config(const plantmon::testing::TempDir& dir, const std::string& text) {
  const auto p = dir.path() / "cfg.yaml";
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST_CASE("cli: simulate writes its outputs") {
  plantmon::testing::TempDir dir;
  CommonOptions o;
  o.config = write_config(dir, "duration_s: 7200\nwarmup_s: 600\n");
  o.out = dir.path() / "out";
  o.seed = 5;
  std::ostringstream out, err;
  CHECK(cmd_simulate(o, out, err) == kExitOk);
  CHECK(err.str().empty());
  for (const char* f : {"series.csv", "summary.txt", "summary.csv"}) CHECK(std::filesystem::exists(*o.out / f));
  CHECK(out.str().find("seed") != std::string::npos);
  CHECK(resolve_config(o).seed == 5);
}

TEST_CASE("cli: compare writes the comparison table") {
  plantmon::testing::TempDir dir;
  CommonOptions o;
  o.config = write_config(dir, "duration_s: 7200\nwarmup_s: 600\n");
  o.out = dir.path();
  std::ostringstream out, err;
  CHECK(cmd_compare(o, out, err) == kExitOk);
  CHECK(std::filesystem::exists(dir.path() / "comparison.csv"));
  CHECK(std::filesystem::exists(dir.path() / "comparison.txt"));
}

TEST_CASE("cli: configuration problems exit with 2") {
  plantmon::testing::TempDir dir;
  std::ostringstream out, err;
  CommonOptions o;
  o.config = write_config(dir, "duration_s: -5\n");
  CHECK(cmd_simulate(o, out, err) == kExitConfig);
  CHECK(err.str().find("cfg.yaml") != std::string::npos);
  o.config = dir.path() / "missing.yaml";
  CHECK(cmd_simulate(o, out, err) == kExitConfig);
  o.config = write_config(dir, "thresholds: {soil_low_pct: 80, soil_high_pct: 60}\n");
  CHECK(cmd_compare(o, out, err) == kExitConfig);
}

TEST_CASE("cli: runtime failures exit with 3") {
  plantmon::testing::TempDir dir;
  std::ofstream(dir.path() / "blocker") << "x";
  CommonOptions o;
  o.config = write_config(dir, "duration_s: 600\nwarmup_s: 0\n");
  o.out = dir.path() / "blocker" / "out";  // parent is a regular file
  std::ostringstream out, err;
  CHECK(cmd_simulate(o, out, err) == kExitRuntime);

  ServeOptions s;
  s.bind = "127.0.0.1:notaport";
  CHECK(cmd_serve({}, s, out, err) == kExitConfig);

  DeviceOptions d;
  d.upload_interval_s = 0;
  o.out = dir.path() / "dev";
  CHECK(cmd_device(o, d, out, err) == kExitConfig);
}

TEST_CASE("cli: device buffers records while the service is unreachable") {
  plantmon::testing::TempDir dir;
  CommonOptions o;
  o.out = dir.path();
  DeviceOptions d;
  d.service = "http://127.0.0.1:1";
  d.upload_interval_s = 1;
  d.duration_s = 3;
  d.display = false;
  std::ostringstream out, err;
  CHECK(cmd_device(o, d, out, err) == kExitOk);
  CHECK(std::filesystem::exists(dir.path() / "device-buffer.csv"));
  std::ostringstream again;
  d.duration_s = 1;
  CHECK(cmd_device(o, d, again, err) == kExitOk);
  CHECK(again.str().find("restored") != std::string::npos);
}
