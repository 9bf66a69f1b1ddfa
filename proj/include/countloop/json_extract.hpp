// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json.hpp>

#include <string_view>
#include <vector>

namespace countloop {

/// Every balanced top-level {...} span in a chat reply that parses as a JSON
/// object, in order of appearance. Code fences and surrounding prose are ignored
/// because only brace-delimited spans are considered.
std::vector<nlohmann::json> extract_json_objects(std::string_view text);

/// Returns the first extracted object accepted by `accept`. Throws JsonError when
/// nothing parses and SchemaError when objects parse but none is accepted (the
/// message of the first rejection is kept).
template <typename Accept>
nlohmann::json first_schema_valid(std::string_view text, Accept&& accept);

} // namespace countloop

#include "countloop/error.hpp"

namespace countloop {

template <typename Accept>
nlohmann::json first_schema_valid(std::string_view text, Accept&& accept) {
    auto objects = extract_json_objects(text);
    if (objects.empty())
        throw JsonError("no parseable JSON object in reply");
    std::string first_reason;
    for (auto& obj : objects) {
        try {
            accept(obj);
            return obj;
        } catch (const SchemaError& e) {
            if (first_reason.empty())
                first_reason = e.what();
        }
    }
    throw SchemaError(first_reason);
}

} // namespace countloop
