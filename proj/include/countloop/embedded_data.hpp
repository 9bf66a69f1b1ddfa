// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string_view>
#include <vector>

namespace countloop::data {

std::string_view irregular_plurals();
std::string_view category_sizes();
std::string_view contexts();
std::string_view categories();

// Non-empty, non-comment lines of a bundled table, trimmed.
std::vector<std::string_view> lines(std::string_view table);

} // namespace countloop::data
