// SPDX-License-Identifier: Apache-2.0
// Internal: the only place the HTTP library is touched.
#pragma once

#include "countloop/remote.hpp"

#include <chrono>
#include <string>

namespace countloop::detail {

struct HttpResponse {
    int status = 0;
    std::string body;
    std::string content_type;
};

/// POSTs `body` and returns whatever the server answered. Throws TransportError
/// when no response arrives (refused, timed out, TLS failure).
HttpResponse http_post(const Endpoint& endpoint, const std::string& path, const std::string& body,
                       const std::string& content_type, std::chrono::milliseconds timeout,
                       const std::string& bearer_token);

} // namespace countloop::detail
