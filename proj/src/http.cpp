// SPDX-License-Identifier: Apache-2.0
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "http.hpp"

#include "countloop/error.hpp"

#include <httplib.h>

#include <fmt/format.h>

namespace countloop::detail {

HttpResponse http_post(const Endpoint& endpoint, const std::string& path, const std::string& body,
                       const std::string& content_type, std::chrono::milliseconds timeout,
                       const std::string& bearer_token) {
    httplib::Client client(fmt::format("{}://{}:{}", endpoint.scheme, endpoint.host, endpoint.port));
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count() > 10
                                      ? std::chrono::seconds(10)
                                      : std::chrono::duration_cast<std::chrono::seconds>(timeout) + std::chrono::seconds(1));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout) + std::chrono::seconds(1));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout) + std::chrono::seconds(1));
    if (!bearer_token.empty())
        client.set_bearer_token_auth(bearer_token);
    auto res = client.Post(path, body, content_type);
    if (!res)
        throw TransportError(fmt::format("POST {}://{}:{}{} failed: {}", endpoint.scheme, endpoint.host, endpoint.port,
                                         path, httplib::to_string(res.error())));
    return {res->status, res->body, res->get_header_value("Content-Type")};
}

} // namespace countloop::detail
