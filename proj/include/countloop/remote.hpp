// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "countloop/backends.hpp"

#include <chrono>
#include <memory>
#include <string>

namespace countloop {

struct Endpoint {
    std::string host;
    int port = 80;
    std::string base_path;  // without trailing slash
    std::string scheme = "http";

    /// Accepts "http://host:port/prefix". Throws ConfigError.
    static Endpoint parse(const std::string& url);
    std::string path(const std::string& suffix) const { return base_path + suffix; }
};

struct RemoteOptions {
    std::chrono::milliseconds timeout{120000};
    int max_inflight = 4;
    std::string bearer_token;
};

nlohmann::json generate_request_json(const GenerateRequest& request);
/// Throws ProtocolError when the body does not match the generate schema.
GenerateRequest generate_request_from_json(const nlohmann::json& body);

nlohmann::json detect_request_json(const Image& image, std::span<const std::string> categories, double confidence);

struct DetectRequest {
    Image image;
    std::vector<std::string> categories;
    double confidence = kDefaultConfidence;
};
/// Throws ProtocolError.
DetectRequest detect_request_from_json(const nlohmann::json& body);
/// Throws ProtocolError when counts/boxes are malformed.
DetectionReport detection_report_from_wire(const nlohmann::json& body);

/// POST {bridge}/generate: layout JSON in, PNG out.
class RemoteGenerator : public ImageGenerator {
public:
    explicit RemoteGenerator(Endpoint endpoint, RemoteOptions opts = {});
    ~RemoteGenerator() override;
    GenerateResult generate(const GenerateRequest& request) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// POST {bridge}/detect: base64 PNG and categories in, DetectionReport out.
class RemoteDetector : public Detector {
public:
    explicit RemoteDetector(Endpoint endpoint, RemoteOptions opts = {});
    ~RemoteDetector() override;
    DetectionReport detect(const Image& image, const RenderManifest* manifest, std::span<const std::string> categories,
                           double confidence) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace countloop
