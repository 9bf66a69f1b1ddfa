// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>

namespace countloop {

// Both operate on the last word of a (lower-case) noun phrase:
// "wine glasses" <-> "wine glass".
std::string singularize(std::string_view phrase);
std::string pluralize(std::string_view phrase);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

} // namespace countloop
