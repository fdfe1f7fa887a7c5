#pragma once

// nlohmann::json conversions used inside the library. Not installed.

#include <json.hpp>

#include "plantmon/controller.hpp"
#include "plantmon/ingest.hpp"

namespace plantmon::wire {

using nlohmann::json;

json to_json(const control::RemoteCommand& cmd);
control::RemoteCommand command_from(const json& j);

json to_json(const ingest::ChannelInfo& info, std::uint64_t last_entry_id);
ingest::ChannelInfo channel_from(const json& j);

json to_json(const ingest::ChannelEntry& e, std::optional<int> only_field = std::nullopt);
ingest::ChannelEntry entry_from(const json& j);

json to_json(const ingest::AlertRule& r);
ingest::AlertRule rule_from(const json& j);

json to_json(const ingest::AlertRecord& r);
ingest::AlertRecord alert_record_from(const json& j);

json to_json(const ingest::DeliveryLogEntry& d);
ingest::DeliveryLogEntry delivery_from(const json& j);

json to_json(const AlertEvent& ev);
AlertEvent alert_event_from(const json& j);

// Parses text, converting nlohmann errors into Error{Protocol}.
json parse(std::string_view text);

}  // namespace plantmon::wire
