#pragma once

// JSON encodings shared by the HTTP service, the device transport and the
// on-disk journals. The field-by-field schemas are in docs/api.md.
//
// Parsers throw Error{Protocol} on malformed input.

#include <optional>
#include <string>
#include <string_view>

#include "plantmon/controller.hpp"
#include "plantmon/ingest.hpp"

namespace plantmon::wire {

std::string command_to_json(const control::RemoteCommand& cmd);
control::RemoteCommand command_from_json(std::string_view text);

// ThingSpeak-style feed document: {"channel": {...}, "feeds": [...]}.
// Field values are encoded as strings, absent fields as null. With
// `only_field` set, entries carry just that field.
std::string feed_to_json(const ingest::Feed& feed, std::optional<int> only_field = std::nullopt);
ingest::Feed feed_from_json(std::string_view text);

std::string alerts_to_json(const ingest::AlertLog& log);
ingest::AlertLog alerts_from_json(std::string_view text);

}  // namespace plantmon::wire
