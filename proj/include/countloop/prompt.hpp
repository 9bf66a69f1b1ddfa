// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace countloop {

/// Per-category count targets extracted from a prompt. These are the ground
/// truth the composite score and the termination rule are measured against.
struct PromptSpec {
    std::map<std::string, int> targets;
    std::map<std::string, std::vector<std::string>> attributes;
    std::optional<std::string> context;
    std::string raw;

    int total() const;
    bool operator==(const PromptSpec&) const = default;
};

/// Deterministic grammar: "<count> <noun phrase>" clauses joined by "and" or
/// ",", optionally preceded by a framing phrase ("a photo of") and followed by a
/// prepositional phrase that becomes the scene context. Counts may be digits,
/// number words up to one hundred ("a hundred and seven"), or an article.
/// Throws ParseError when no countable clause is found or a quantity is vague.
PromptSpec parse_prompt(std::string_view text);

/// Reads a PromptSpec out of an LLM reply: either {"targets": {...}} or a
/// planning-graph style {"objects": [...]} whose nodes are counted per category.
PromptSpec parse_llm_json(std::string_view text);

/// Parses a number expressed in words or digits; nullopt if not a count.
std::optional<int> parse_number_words(std::string_view text);

void to_json(nlohmann::json& j, const PromptSpec& spec);
void from_json(const nlohmann::json& j, PromptSpec& spec);

} // namespace countloop
