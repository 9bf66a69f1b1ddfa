// SPDX-License-Identifier: Apache-2.0
#include "countloop/llm.hpp"

#include "countloop/error.hpp"
#include "countloop/json_extract.hpp"
#include "http.hpp"

#include <fmt/format.h>

#include <thread>

namespace countloop {

namespace {

constexpr std::string_view kDesignerInstructions = R"(You plan object layouts for an image generator.
Reply with one JSON object and nothing else. Shape:
{
  "objects": [{"id": "<category>_<k>", "category": "<category>", "pos": [x, y], "d": depth, "size": [w, h],
               "color": "<optional>", "attributes": ["<optional>", ...]}],
  "relations": [{"from": "<id>", "to": "<id>", "relation": "above|below|left-of|right-of|near|on",
                 "dist": pixels, "angle": degrees}],
  "context": "<background description>"
}
Conventions: pos is the box center and size its extent, both as fractions of the canvas, x grows to the
right and y grows downward. d is depth, 0 for the nearest object and 1 for the farthest.
Rules:
- Keep exactly the number of instances of every category given in the draft. Number ids 1..n per category.
- Boxes must stay inside the canvas and must not touch or overlap each other.
- Scatter instances the way they would lie in a real scene: vary gaps and angles, avoid rows, columns and lattices.
- Directional relations must agree with the positions (a "below" source has the larger y).
Example reply for "two cats in a field under a bird":
{"objects": [
  {"id": "cat_1", "category": "cat", "pos": [0.3, 0.6], "d": 0.4, "size": [0.2, 0.25]},
  {"id": "cat_2", "category": "cat", "pos": [0.6, 0.65], "d": 0.4, "size": [0.22, 0.27]},
  {"id": "bird_1", "category": "bird", "pos": [0.5, 0.3], "d": 0.2, "size": [0.15, 0.1]}],
 "relations": [
  {"from": "cat_1", "to": "bird_1", "relation": "below", "dist": 120, "angle": 90},
  {"from": "cat_2", "to": "bird_1", "relation": "below", "dist": 100, "angle": 85}],
 "context": "outdoor, grassy field"})";

constexpr std::string_view kCriticInstructions = R"(You review object layouts produced for a counting-accurate image generator.
You receive the prompt, the current boxes and reference metrics from a detector and an aesthetic scorer.
Trust the reference counts over your own impression. Reply with one JSON object and nothing else:
{
  "evaluation": {"count_accuracy": {"detected": {"<category>": n}, "target": {"<category>": n}},
                 "spatial_quality": <0..1>},
  "issues": [{"type": "count|spatial|attribute", "severity": "critical|major|minor",
              "description": "<what is wrong, naming ids such as cup_7>",
              "suggested_fix": "<concrete change>"}],
  "decision": {"continue_refinement": true|false, "reason": "<short justification>"}
}
Report every missing or extra instance as a critical count issue. Report boxes that overlap or nearly touch
as major spatial issues naming both ids ("cup_7 is overlapping with cup_3"). Flag a lattice-like
arrangement as a spatial issue mentioning "grid". Stop refining only when counts match and the layout is clean.)";

} // namespace

nlohmann::json chat_request_json(const std::string& model, std::span<const ChatMessage> messages, double temperature) {
    auto msgs = nlohmann::json::array();
    for (const auto& m : messages)
        msgs.push_back({{"role", m.role}, {"content", m.content}});
    return {{"model", model}, {"messages", msgs}, {"temperature", temperature}};
}

std::string chat_reply_content(const nlohmann::json& body) {
    if (!body.is_object())
        throw EmptyReplyError("chat reply is not a JSON object");
    auto choices = body.find("choices");
    if (choices == body.end() || !choices->is_array() || choices->empty())
        throw EmptyReplyError("chat reply has no choices");
    const auto& first = (*choices)[0];
    if (!first.contains("message") || !first["message"].is_object())
        throw EmptyReplyError("chat reply choice has no message");
    auto content = first["message"].find("content");
    if (content == first["message"].end() || !content->is_string() || content->get<std::string>().empty())
        throw EmptyReplyError("chat reply message is empty");
    return content->get<std::string>();
}

HttpChatClient::HttpChatClient(Endpoint endpoint, ChatParams params)
    : endpoint_(std::move(endpoint)), params_(std::move(params)) {}

std::string HttpChatClient::chat(std::span<const ChatMessage> messages) {
    const auto body = chat_request_json(params_.model, messages, params_.temperature).dump();
    const int attempts = std::max(1, params_.attempts);
    auto backoff = params_.initial_backoff;
    for (int attempt = 1;; ++attempt) {
        try {
            auto res = detail::http_post(endpoint_, endpoint_.path("/v1/chat/completions"), body, "application/json",
                                         params_.timeout, params_.api_key);
            if (res.status == 429)
                throw RateLimitError("chat endpoint is rate limiting (429)");
            if (res.status >= 500)
                throw TransportError(fmt::format("chat endpoint answered {}", res.status));
            if (res.status < 200 || res.status >= 300)
                // Client errors will not go away on retry.
                throw BackendError(fmt::format("chat endpoint rejected the request ({}): {}", res.status,
                                               res.body.substr(0, 200)));
            auto parsed = nlohmann::json::parse(res.body, nullptr, false);
            if (parsed.is_discarded())
                throw EmptyReplyError("chat reply is not JSON");
            return chat_reply_content(parsed);
        } catch (const TransportError&) {
            if (attempt >= attempts)
                throw;
        } catch (const EmptyReplyError&) {
            if (attempt >= attempts)
                throw;
        }
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
    }
}

std::vector<ChatMessage> layout_designer_messages(const PlanningGraph& draft, const std::string& prompt) {
    std::string counts;
    for (const auto& [category, n] : draft.category_counts())
        counts += fmt::format("{}{}: {}", counts.empty() ? "" : ", ", category, n);
    return {
        {"system", std::string(kDesignerInstructions)},
        {"user", fmt::format("Prompt: {}\nRequired instances: {}\nDraft layout:\n{}\nDraft as JSON:\n{}\n"
                             "Return the improved layout as JSON.",
                             prompt, counts, graph_to_prompt(draft), nlohmann::json(draft).dump())},
    };
}

std::vector<ChatMessage> critic_messages(const std::string& prompt, const Layout& layout, const DetectionReport& detected,
                                         const CountMap& targets, double aesthetic, double composite) {
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& b : layout.boxes)
        boxes.push_back({{"id", b.id}, {"bbox", b.bbox}});
    nlohmann::json metrics{{"detected", detected.counts},
                           {"target", targets},
                           {"aesthetic_score", aesthetic},
                           {"composite_score", composite},
                           {"canvas", layout.resolution}};
    return {
        {"system", std::string(kCriticInstructions)},
        {"user", fmt::format("Prompt: {}\nCurrent layout (pixel boxes [x0, y0, x1, y1]):\n{}\nReference metrics:\n{}",
                             prompt, boxes.dump(), metrics.dump())},
    };
}

PlanningGraph llm_plan(ChatClient& llm, const PlanningGraph& draft, const std::string& prompt, std::string* note) {
    auto reply = llm.chat(layout_designer_messages(draft, prompt));
    const auto wanted = draft.category_counts();
    try {
        PlanningGraph planned;
        first_schema_valid(reply, [&](const nlohmann::json& j) {
            auto g = j.get<PlanningGraph>();
            if (auto v = validate_graph(g); !v.empty())
                throw SchemaError("planned graph is invalid: " + v.front().subject + ": " + v.front().message);
            if (g.category_counts() != wanted)
                throw SchemaError("planned graph changes instance counts");
            planned = std::move(g);
        });
        if (planned.context.empty())
            planned.context = draft.context;
        return planned;
    } catch (const Error& e) {
        if (note)
            *note = std::string("kept rule-based draft: ") + e.what();
        return draft;
    }
}

} // namespace countloop
