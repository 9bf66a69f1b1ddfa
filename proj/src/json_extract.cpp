// SPDX-License-Identifier: Apache-2.0
#include "countloop/json_extract.hpp"

namespace countloop {

namespace {

// End index (inclusive) of the object opening at `start`, or npos when the
// braces never balance. Braces inside string literals do not count.
std::size_t matching_brace(std::string_view text, std::size_t start) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
        char c = text[i];
        if (in_string) {
            if (escaped)
                escaped = false;
            else if (c == '\\')
                escaped = true;
            else if (c == '"')
                in_string = false;
            continue;
        }
        if (c == '"')
            in_string = true;
        else if (c == '{')
            ++depth;
        else if (c == '}' && --depth == 0)
            return i;
    }
    return std::string_view::npos;
}

} // namespace

std::vector<nlohmann::json> extract_json_objects(std::string_view text) {
    std::vector<nlohmann::json> out;
    std::size_t pos = 0;
    while ((pos = text.find('{', pos)) != std::string_view::npos) {
        auto end = matching_brace(text, pos);
        if (end == std::string_view::npos) {
            ++pos;
            continue;
        }
        auto parsed = nlohmann::json::parse(text.substr(pos, end - pos + 1), nullptr, /*allow_exceptions=*/false);
        if (!parsed.is_discarded() && parsed.is_object()) {
            out.push_back(std::move(parsed));
            pos = end + 1;
        } else {
            ++pos;
        }
    }
    return out;
}

} // namespace countloop
