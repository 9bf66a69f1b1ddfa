// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "countloop/backends.hpp"
#include "countloop/critic.hpp"
#include "countloop/graph.hpp"
#include "countloop/remote.hpp"

#include <chrono>
#include <string>

namespace countloop {

struct ChatParams {
    std::string model;
    double temperature = 0.0;
    int attempts = 3;
    std::chrono::milliseconds initial_backoff{200};
    std::chrono::milliseconds timeout{120000};
    std::string api_key;  // sent as a bearer token when non-empty
};

/// Chat-completions client: POST {endpoint}/v1/chat/completions. Transient
/// failures (connection errors, 429, 5xx) are retried with exponential backoff.
/// Throws TransportError, RateLimitError or EmptyReplyError after the last attempt.
class HttpChatClient : public ChatClient {
public:
    HttpChatClient(Endpoint endpoint, ChatParams params);
    std::string chat(std::span<const ChatMessage> messages) override;

private:
    Endpoint endpoint_;
    ChatParams params_;
};

nlohmann::json chat_request_json(const std::string& model, std::span<const ChatMessage> messages, double temperature);
/// Throws EmptyReplyError when no message content is present.
std::string chat_reply_content(const nlohmann::json& body);

/// Layout-designer conversation: instructions with the graph JSON schema and
/// worked examples, then the rendered planning graph and the user prompt.
std::vector<ChatMessage> layout_designer_messages(const PlanningGraph& draft, const std::string& prompt);

/// Design-critic conversation: instructions, schema, the prompt, the current
/// layout and the detector/aesthetic reference metrics.
std::vector<ChatMessage> critic_messages(const std::string& prompt, const Layout& layout, const DetectionReport& detected,
                                         const CountMap& targets, double aesthetic, double composite);

/// Asks the LLM to refine the rule-based draft graph. The reply must decode to
/// a valid graph with exactly the target counts; otherwise the draft is kept
/// and `note` explains why.
PlanningGraph llm_plan(ChatClient& llm, const PlanningGraph& draft, const std::string& prompt, std::string* note = nullptr);

} // namespace countloop
