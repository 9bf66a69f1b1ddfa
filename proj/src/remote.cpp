// SPDX-License-Identifier: Apache-2.0
#include "countloop/remote.hpp"

#include "countloop/error.hpp"
#include "http.hpp"

#include <fmt/format.h>

#include <regex>
#include <semaphore>

namespace countloop {

Endpoint Endpoint::parse(const std::string& url) {
    static const std::regex re(R"(^(https?)://([^/:]+)(?::(\d+))?(/.*)?$)", std::regex::icase);
    std::smatch m;
    if (!std::regex_match(url, m, re))
        throw ConfigError("not an http(s) URL: '" + url + "'");
    Endpoint e;
    e.scheme = m[1].str();
    std::transform(e.scheme.begin(), e.scheme.end(), e.scheme.begin(), [](unsigned char c) { return std::tolower(c); });
    e.host = m[2].str();
    e.port = m[3].matched ? std::stoi(m[3].str()) : (e.scheme == "https" ? 443 : 80);
    if (e.port <= 0 || e.port > 65535)
        throw ConfigError("port out of range in '" + url + "'");
    e.base_path = m[4].matched ? m[4].str() : "";
    while (!e.base_path.empty() && e.base_path.back() == '/')
        e.base_path.pop_back();
    return e;
}

nlohmann::json generate_request_json(const GenerateRequest& request) {
    return {{"layout", request.layout},
            {"prompt_d", request.prompt_d},
            {"prompt_bg", request.prompt_bg},
            {"seed", request.seed},
            {"steps", request.steps}};
}

GenerateRequest generate_request_from_json(const nlohmann::json& body) {
    if (!body.is_object() || !body.contains("layout"))
        throw ProtocolError("generate request requires \"layout\"");
    GenerateRequest r;
    try {
        r.layout = body["layout"].get<Layout>();
        r.prompt_d = body.value("prompt_d", std::string{});
        r.prompt_bg = body.value("prompt_bg", std::string{});
        r.seed = body.value("seed", std::uint64_t{42});
        r.steps = body.value("steps", 50);
    } catch (const SchemaError& e) {
        throw ProtocolError(e.what());
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("malformed generate request: ") + e.what());
    }
    if (r.steps < 1)
        throw ProtocolError("steps must be at least 1");
    if (r.layout.resolution < 8)
        throw ProtocolError("layout resolution is too small");
    return r;
}

nlohmann::json detect_request_json(const Image& image, std::span<const std::string> categories, double confidence) {
    return {{"image", base64_encode(encode_png(image))},
            {"categories", std::vector<std::string>(categories.begin(), categories.end())},
            {"confidence", confidence}};
}

DetectRequest detect_request_from_json(const nlohmann::json& body) {
    if (!body.is_object() || !body.contains("image") || !body["image"].is_string())
        throw ProtocolError("detect request requires a base64 \"image\"");
    DetectRequest r;
    auto bytes = base64_decode(body["image"].get<std::string>());
    r.image = decode_png(bytes);
    auto cats = body.find("categories");
    if (cats == body.end() || !cats->is_array())
        throw ProtocolError("detect request requires a \"categories\" array");
    for (const auto& c : *cats) {
        if (!c.is_string())
            throw ProtocolError("categories must be strings");
        r.categories.push_back(c.get<std::string>());
    }
    if (auto conf = body.find("confidence"); conf != body.end()) {
        if (!conf->is_number())
            throw ProtocolError("confidence must be a number");
        r.confidence = conf->get<double>();
    }
    return r;
}

DetectionReport detection_report_from_wire(const nlohmann::json& body) {
    try {
        return body.get<DetectionReport>();
    } catch (const SchemaError& e) {
        throw ProtocolError(std::string("detect response: ") + e.what());
    }
}

namespace {

void raise_for_status(const detail::HttpResponse& res, const std::string& what) {
    if (res.status >= 200 && res.status < 300)
        return;
    auto snippet = res.body.substr(0, 200);
    if (res.status == 400 || res.status == 422)
        throw ProtocolError(fmt::format("{} rejected the request ({}): {}", what, res.status, snippet));
    throw TransportError(fmt::format("{} answered {}: {}", what, res.status, snippet));
}

} // namespace

struct RemoteGenerator::Impl {
    Endpoint endpoint;
    RemoteOptions opts;
    std::counting_semaphore<64> inflight;
    Impl(Endpoint e, RemoteOptions o)
        : endpoint(std::move(e)), opts(std::move(o)), inflight(std::clamp(opts.max_inflight, 1, 64)) {}
};

RemoteGenerator::RemoteGenerator(Endpoint endpoint, RemoteOptions opts)
    : impl_(std::make_unique<Impl>(std::move(endpoint), std::move(opts))) {}
RemoteGenerator::~RemoteGenerator() = default;

GenerateResult RemoteGenerator::generate(const GenerateRequest& request) {
    impl_->inflight.acquire();
    struct Release {
        std::counting_semaphore<64>& s;
        ~Release() { s.release(); }
    } release{impl_->inflight};
    auto res = detail::http_post(impl_->endpoint, impl_->endpoint.path("/generate"), generate_request_json(request).dump(),
                                 "application/json", impl_->opts.timeout, impl_->opts.bearer_token);
    raise_for_status(res, "generator");
    auto bytes = std::span(reinterpret_cast<const std::uint8_t*>(res.body.data()), res.body.size());
    GenerateResult out;
    out.image = decode_png(bytes);
    if (out.image.width != request.layout.resolution || out.image.height != request.layout.resolution)
        throw ProtocolError(fmt::format("generator returned {}x{}, expected {}x{}", out.image.width, out.image.height,
                                        request.layout.resolution, request.layout.resolution));
    return out;
}

struct RemoteDetector::Impl {
    Endpoint endpoint;
    RemoteOptions opts;
    std::counting_semaphore<64> inflight;
    Impl(Endpoint e, RemoteOptions o)
        : endpoint(std::move(e)), opts(std::move(o)), inflight(std::clamp(opts.max_inflight, 1, 64)) {}
};

RemoteDetector::RemoteDetector(Endpoint endpoint, RemoteOptions opts)
    : impl_(std::make_unique<Impl>(std::move(endpoint), std::move(opts))) {}
RemoteDetector::~RemoteDetector() = default;

DetectionReport RemoteDetector::detect(const Image& image, const RenderManifest*, std::span<const std::string> categories,
                                       double confidence) {
    impl_->inflight.acquire();
    struct Release {
        std::counting_semaphore<64>& s;
        ~Release() { s.release(); }
    } release{impl_->inflight};
    auto res = detail::http_post(impl_->endpoint, impl_->endpoint.path("/detect"),
                                 detect_request_json(image, categories, confidence).dump(), "application/json",
                                 impl_->opts.timeout, impl_->opts.bearer_token);
    raise_for_status(res, "detector");
    nlohmann::json body = nlohmann::json::parse(res.body, nullptr, false);
    if (body.is_discarded())
        throw ProtocolError("detector response is not JSON");
    auto report = apply_confidence(detection_report_from_wire(body), confidence);
    for (const auto& c : categories)
        report.counts.try_emplace(c, 0);
    return report;
}

} // namespace countloop
