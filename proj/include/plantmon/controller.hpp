#pragma once

// The device main loop as an explicit state machine.
//
// controller_step consumes one calibrated frame per 1 s tick and decides the
// pump, LED and buzzer outputs. Soil moisture drives irrigation with
// hysteresis between the low and high thresholds; a critical water level
// overrides everything, forces the pump off and raises one emergency alert
// per crossing. Side effects leave the controller as Request values.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "plantmon/domain.hpp"

namespace plantmon::control {

enum class Led : std::uint8_t { Green, Yellow, Red };
enum class Mode : std::uint8_t { Normal, Irrigating, WaterCritical, Fault };
enum class Screen : std::uint8_t { Main, Secondary, Historical, Settings };

std::string_view to_string(Led l);
std::string_view to_string(Mode m);
std::string_view to_string(Screen s);
std::optional<Mode> parse_mode(std::string_view s);

// A manual pump command holds for a fixed duration, then automatic control
// resumes.
struct ManualOverride {
  enum class Kind : std::uint8_t { None, ForceOn, ForceOff };
  Kind kind = Kind::None;
  Millis until{0};
  friend bool operator==(const ManualOverride&, const ManualOverride&) = default;
};

struct ControllerState {
  bool pump = false;
  Led led = Led::Green;
  bool buzzer = false;
  Mode mode = Mode::Normal;
  Screen screen = Screen::Main;
  Millis last_upload_t{0};
  std::vector<AlertEvent> pending_alerts;

  Thresholds thresholds;
  Millis now{0};                       // time of the last step
  bool buzzer_silenced = false;        // AckAlert during the current water alarm
  bool water_alarm_latched = false;    // water-critical condition seen last step
  bool soil_alert_latched = false;     // re-armed once soil rises above soil_high
  ManualOverride manual;
  Millis manual_duration{60'000};
  std::uint64_t next_alert_id = 1;

  friend bool operator==(const ControllerState&, const ControllerState&) = default;
};

// Mode/output consistency:
//   WaterCritical <=> led Red;  buzzer on <=> WaterCritical and not silenced
//   Irrigating => pump on, led Yellow;  Normal => pump off, led Green
//   Fault => pump off, led Yellow
bool outputs_consistent(const ControllerState& cs);

struct RefreshDisplay {
  friend bool operator==(const RefreshDisplay&, const RefreshDisplay&) = default;
};
struct SendAlert {
  AlertEvent alert;
  friend bool operator==(const SendAlert&, const SendAlert&) = default;
};
struct SetPump {
  bool on = false;
  friend bool operator==(const SetPump&, const SetPump&) = default;
};
using Request = std::variant<RefreshDisplay, SendAlert, SetPump>;

struct StepResult {
  ControllerState state;
  std::vector<Request> requests;
};

// One control cycle. `th` must already be valid; it becomes the state's
// active thresholds.
StepResult controller_step(ControllerState cs, const CalibratedFrame& frame, const Thresholds& th, Millis now);

// Numbers and queues an alert (used for sensing-side alerts as well).
AlertEvent queue_alert(ControllerState& cs, const AlertRequest& req);
// Removes and returns every queued alert.
std::vector<AlertEvent> take_pending_alerts(ControllerState& cs);

// now - last_upload_t >= interval. interval must be positive.
bool should_upload(const ControllerState& cs, Millis now, Millis interval);

// ---- remote commands -----------------------------------------------------

enum class Verb : std::uint8_t { PumpOn, PumpOff, SetThresholds, AckAlert };
std::string_view to_string(Verb v);
std::optional<Verb> parse_verb(std::string_view s);

struct RemoteCommand {
  std::uint64_t id = 0;
  Verb verb = Verb::PumpOn;
  Thresholds thresholds;                 // SetThresholds
  std::optional<std::uint64_t> alert_id; // AckAlert
  friend bool operator==(const RemoteCommand&, const RemoteCommand&) = default;
};

enum class CommandOutcome : std::uint8_t { Ack, RejectedBySafetyInterlock, InvalidThresholds };
std::string_view to_string(CommandOutcome o);

struct CommandResult {
  ControllerState state;
  CommandOutcome outcome = CommandOutcome::Ack;
};

// Pump commands are honoured only in Normal/Irrigating mode. AckAlert
// silences the buzzer; the mode stays WaterCritical until the level recovers.
CommandResult apply_command(ControllerState cs, const RemoteCommand& cmd);

// ---- local display -------------------------------------------------------

inline constexpr std::size_t kDisplayRows = 8;
inline constexpr std::size_t kDisplayCols = 21;

struct DisplayFrame {
  Screen screen = Screen::Main;
  std::vector<std::string> lines;  // <= 8 lines of <= 21 characters
};

Screen next_screen(Screen s);

// `history` holds recent frames (any order); the Historical screen
// summarises those within 24 h of `frame.t`.
DisplayFrame render_display(const ControllerState& cs, const CalibratedFrame& frame,
                            std::span<const CalibratedFrame> history);

std::string to_text(const DisplayFrame& d);

}  // namespace plantmon::control
