// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "countloop/image.hpp"
#include "countloop/layout.hpp"
#include "countloop/scoring.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace countloop {

/// One instance as it actually appears in a simulated render. A fused blob
/// (the leakage failure mode) lists every layout box it swallowed.
struct RenderedInstance {
    std::string category;
    std::vector<std::string> members;
    int fragments = 1;  // visible connected regions; 0 when fully occluded
};

struct RenderManifest {
    std::vector<RenderedInstance> instances;
    std::vector<std::string> dropped;  // ids removed by drop noise

    CountMap counts() const;
};

struct GenerateRequest {
    Layout layout;
    std::string prompt_d;
    std::string prompt_bg;
    std::uint64_t seed = 42;
    int steps = 50;
};

struct GenerateResult {
    Image image;
    std::optional<RenderManifest> manifest;  // only the simulator knows ground truth
};

class ImageGenerator {
public:
    virtual ~ImageGenerator() = default;
    virtual GenerateResult generate(const GenerateRequest& request) = 0;
};

class Detector {
public:
    virtual ~Detector() = default;
    virtual DetectionReport detect(const Image& image, const RenderManifest* manifest,
                                   std::span<const std::string> categories, double confidence) = 0;
};

class AestheticScorer {
public:
    virtual ~AestheticScorer() = default;
    /// nullopt when no score can be produced (e.g. no image).
    virtual std::optional<double> score(const Layout& layout, const Image& image) = 0;
};

struct ChatMessage {
    std::string role;
    std::string content;
};

class ChatClient {
public:
    virtual ~ChatClient() = default;
    virtual std::string chat(std::span<const ChatMessage> messages) = 0;
};

struct BackendSet {
    std::shared_ptr<ImageGenerator> generator;
    std::shared_ptr<Detector> detector;
    std::shared_ptr<AestheticScorer> aesthetic;
    std::shared_ptr<ChatClient> llm;  // optional: LLM planner / critic
};

// --- simulator ---------------------------------------------------------------

/// Category colors: stable hash into a 32-entry palette, collisions resolved by
/// open addressing in sorted category order. Background and outline colors are
/// never handed out.
class Palette {
public:
    static constexpr int kSize = 32;
    static constexpr Rgb kBackground{255, 255, 255};
    static constexpr Rgb kOutline{24, 24, 24};

    explicit Palette(std::span<const std::string> categories, const std::map<std::string, Rgb>& overrides = {});
    Rgb color(const std::string& category) const;
    const std::map<std::string, Rgb>& colors() const { return colors_; }

private:
    std::map<std::string, Rgb> colors_;
};

struct SimConfig {
    double merge_iou = 0.10;
    double drop_prob = 0.0;
    std::uint64_t noise_seed = 0;
    std::map<std::string, Rgb> palette;  // overrides
};

/// Renders every box as an outlined ellipse in paint order. Same-category boxes
/// with IoU >= merge_iou fuse (transitively) into a single blob inscribed in
/// their union box; each surviving blob is dropped with drop_prob, seeded per
/// (noise_seed, first member id). The manifest counts visible fill regions per
/// blob, which is exactly what per-color connected components see.
GenerateResult sim_generate(const Layout& layout, const SimConfig& cfg);

enum class DetectMode { Auto, Manifest, Pixel };

/// Manifest mode returns rendered counts; pixel mode counts 4-connected regions
/// of each category color. Auto uses the manifest when one is supplied.
DetectionReport sim_detect(const Image& image, const RenderManifest* manifest, std::span<const std::string> categories,
                           DetectMode mode = DetectMode::Auto, const std::map<std::string, Rgb>& palette_overrides = {});

struct AestheticWeights {
    double overlap = 0.5;
    double grid = 0.3;
    double out_of_bounds = 0.2;
};

/// 1 - w_ov * overlap_fraction - w_gr * grid_score - w_ob * oob_fraction, clamped.
double sim_aesthetic(const Layout& layout, const Image& image, const AestheticWeights& w = {});

/// Fraction of boxes that intersect at least one other box.
double overlap_fraction(const Layout& layout);
/// Fraction of boxes that extend past the canvas.
double out_of_bounds_fraction(const Layout& layout);

class SimGenerator : public ImageGenerator {
public:
    explicit SimGenerator(SimConfig cfg = {}) : cfg_(std::move(cfg)) {}
    /// noise_seed is mixed with the request seed, so each iteration draws fresh,
    /// reproducible drop noise.
    GenerateResult generate(const GenerateRequest& request) override;

private:
    SimConfig cfg_;
};

class SimDetector : public Detector {
public:
    explicit SimDetector(DetectMode mode = DetectMode::Auto, std::map<std::string, Rgb> palette = {})
        : mode_(mode), palette_(std::move(palette)) {}
    DetectionReport detect(const Image& image, const RenderManifest* manifest, std::span<const std::string> categories,
                           double confidence) override;

private:
    DetectMode mode_;
    std::map<std::string, Rgb> palette_;
};

class SimAesthetic : public AestheticScorer {
public:
    std::optional<double> score(const Layout& layout, const Image& image) override;
};

BackendSet make_sim_backends(const SimConfig& cfg = {}, DetectMode mode = DetectMode::Auto);

void to_json(nlohmann::json& j, const RenderManifest& m);

} // namespace countloop
