// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <json.hpp>

#include "infill/protocol.hpp"

namespace infill {

using Json = nlohmann::ordered_json;

Json to_json(const KnowledgeEvent& event);
Json to_json(const ConversationalPhrase& phrase);
Json to_json(const TurnTranscript& transcript);
Json to_json(const Conversation& conversation);

TurnTranscript transcript_from(const Json& j);

}  // namespace infill
