// SPDX-License-Identifier: Apache-2.0
#include "countloop/backends.hpp"

#include "countloop/error.hpp"
#include "countloop/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <numeric>

namespace countloop {

namespace {

// Saturated, mutually distinct colors; none is the background or outline.
constexpr std::array<Rgb, Palette::kSize> kPaletteColors{{
    {230, 25, 75},   {60, 180, 75},   {255, 225, 25},  {0, 130, 200},   {245, 130, 48},  {145, 30, 180},
    {70, 240, 240},  {240, 50, 230},  {210, 245, 60},  {250, 190, 212}, {0, 128, 128},   {220, 190, 255},
    {170, 110, 40},  {255, 250, 200}, {128, 0, 0},     {170, 255, 195}, {128, 128, 0},   {255, 215, 180},
    {0, 0, 128},     {128, 128, 128}, {200, 80, 80},   {80, 200, 120},  {90, 90, 220},   {230, 160, 0},
    {0, 200, 200},   {180, 0, 90},    {100, 60, 160},  {160, 200, 0},   {0, 90, 40},     {200, 120, 220},
    {255, 120, 120}, {120, 170, 255},
}};

struct UnionFind {
    std::vector<std::size_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent[x] != x)
            x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b)
            parent[std::max(a, b)] = std::min(a, b);
    }
};

struct Blob {
    std::string category;
    std::vector<std::string> members;
    PixelRect box;
    int z = 0;
    bool dropped = false;
};

constexpr int kOutlinePixel = -2;
constexpr int kEmptyPixel = -1;

bool inside_ellipse(const PixelRect& r, int x, int y) {
    double cx = 0.5 * (r.x0 + r.x1), cy = 0.5 * (r.y0 + r.y1);
    double a = 0.5 * r.width(), b = 0.5 * r.height();
    double dx = (x + 0.5 - cx) / a, dy = (y + 0.5 - cy) / b;
    return dx * dx + dy * dy <= 1.0;
}

// 4-connected components of cells satisfying `member`, with their bounding boxes.
template <class Member>
std::vector<PixelRect> components(int width, int height, Member&& member) {
    std::vector<PixelRect> out;
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(width) * height, 0);
    std::vector<std::pair<int, int>> stack;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            auto idx = static_cast<std::size_t>(y) * width + x;
            if (seen[idx] || !member(x, y))
                continue;
            PixelRect box{x, y, x + 1, y + 1};
            seen[idx] = 1;
            stack.emplace_back(x, y);
            while (!stack.empty()) {
                auto [px, py] = stack.back();
                stack.pop_back();
                box = {std::min(box.x0, px), std::min(box.y0, py), std::max(box.x1, px + 1), std::max(box.y1, py + 1)};
                constexpr int dx[] = {1, -1, 0, 0};
                constexpr int dy[] = {0, 0, 1, -1};
                for (int k = 0; k < 4; ++k) {
                    int nx = px + dx[k], ny = py + dy[k];
                    if (nx < 0 || ny < 0 || nx >= width || ny >= height)
                        continue;
                    auto nidx = static_cast<std::size_t>(ny) * width + nx;
                    if (!seen[nidx] && member(nx, ny)) {
                        seen[nidx] = 1;
                        stack.emplace_back(nx, ny);
                    }
                }
            }
            out.push_back(box);
        }
    return out;
}

std::vector<std::string> categories_of(const Layout& layout) {
    std::vector<std::string> out;
    for (const auto& b : layout.boxes)
        out.push_back(b.category);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

} // namespace

CountMap RenderManifest::counts() const {
    CountMap out;
    for (const auto& i : instances)
        out[i.category] += i.fragments;
    return out;
}

Palette::Palette(std::span<const std::string> categories, const std::map<std::string, Rgb>& overrides) {
    std::vector<std::string> sorted(categories.begin(), categories.end());
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::array<bool, kSize> taken{};
    for (const auto& [category, rgb] : overrides) {
        colors_[category] = rgb;
        for (int i = 0; i < kSize; ++i)
            if (kPaletteColors[static_cast<std::size_t>(i)] == rgb)
                taken[static_cast<std::size_t>(i)] = true;
    }
    for (const auto& category : sorted) {
        if (colors_.count(category))
            continue;
        auto slot = static_cast<std::size_t>(hash_string(category) % kSize);
        std::size_t probes = 0;
        while (taken[slot] && probes++ < kSize)
            slot = (slot + 1) % kSize;
        if (taken[slot])
            throw ConfigError(fmt::format("more than {} categories cannot get distinct colors", kSize));
        taken[slot] = true;
        colors_[category] = kPaletteColors[slot];
    }
}

Rgb Palette::color(const std::string& category) const {
    auto it = colors_.find(category);
    if (it == colors_.end())
        throw ConfigError("no palette color for category '" + category + "'");
    return it->second;
}

GenerateResult sim_generate(const Layout& layout, const SimConfig& cfg) {
    if (cfg.merge_iou < 0.0 || cfg.merge_iou > 1.0 || cfg.drop_prob < 0.0 || cfg.drop_prob > 1.0)
        throw ConfigError("sim probabilities must lie in [0,1]");
    const int res = layout.resolution;
    const auto& boxes = layout.boxes;

    // Leakage: same-category boxes overlapping enough fuse into one blob.
    UnionFind uf(boxes.size());
    for (std::size_t i = 0; i < boxes.size(); ++i)
        for (std::size_t j = i + 1; j < boxes.size(); ++j)
            if (boxes[i].category == boxes[j].category && intersection_area(boxes[i].bbox, boxes[j].bbox) > 0 &&
                iou(boxes[i].bbox, boxes[j].bbox) >= cfg.merge_iou)
                uf.unite(i, j);
    std::map<std::size_t, Blob> by_root;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        auto& blob = by_root[uf.find(i)];
        const auto& b = boxes[i];
        if (blob.members.empty()) {
            blob.category = b.category;
            blob.box = b.bbox;
            blob.z = b.z;
        } else {
            blob.box = {std::min(blob.box.x0, b.bbox.x0), std::min(blob.box.y0, b.bbox.y0),
                        std::max(blob.box.x1, b.bbox.x1), std::max(blob.box.y1, b.bbox.y1)};
            blob.z = std::max(blob.z, b.z);
        }
        blob.members.push_back(b.id);
    }
    std::vector<Blob> blobs;
    for (auto& [_, blob] : by_root) {
        std::sort(blob.members.begin(), blob.members.end(), node_id_less);
        blobs.push_back(std::move(blob));
    }
    std::sort(blobs.begin(), blobs.end(), [](const Blob& a, const Blob& b) {
        if (a.z != b.z)
            return a.z < b.z;
        return node_id_less(a.members.front(), b.members.front());
    });

    RenderManifest manifest;
    for (auto& blob : blobs) {
        Rng rng(mix_seed(cfg.noise_seed, hash_string(blob.members.front())));
        blob.dropped = cfg.drop_prob > 0.0 && rng.uniform() < cfg.drop_prob;
        if (blob.dropped)
            manifest.dropped.insert(manifest.dropped.end(), blob.members.begin(), blob.members.end());
    }

    Palette palette(categories_of(layout), cfg.palette);
    GenerateResult out;
    out.image = Image(res, res, Palette::kBackground);
    std::vector<int> owner(static_cast<std::size_t>(res) * res, kEmptyPixel);

    for (std::size_t k = 0; k < blobs.size(); ++k) {
        const auto& blob = blobs[k];
        if (blob.dropped)
            continue;
        const Rgb fill = palette.color(blob.category);
        const auto& r = blob.box;
        for (int y = std::max(r.y0, 0); y < std::min(r.y1, res); ++y)
            for (int x = std::max(r.x0, 0); x < std::min(r.x1, res); ++x) {
                if (!inside_ellipse(r, x, y))
                    continue;
                // A pixel with any 4-neighbour outside the ellipse is outline, so
                // fills of different blobs are never 4-adjacent.
                bool edge = !inside_ellipse(r, x - 1, y) || !inside_ellipse(r, x + 1, y) ||
                            !inside_ellipse(r, x, y - 1) || !inside_ellipse(r, x, y + 1);
                auto idx = static_cast<std::size_t>(y) * res + x;
                owner[idx] = edge ? kOutlinePixel : static_cast<int>(k);
                out.image.set(x, y, edge ? Palette::kOutline : fill);
            }
    }

    for (std::size_t k = 0; k < blobs.size(); ++k) {
        const auto& blob = blobs[k];
        if (blob.dropped)
            continue;
        RenderedInstance inst{blob.category, blob.members, 0};
        const auto& r = blob.box;
        int x0 = std::max(r.x0, 0), y0 = std::max(r.y0, 0);
        int w = std::min(r.x1, res) - x0, h = std::min(r.y1, res) - y0;
        if (w > 0 && h > 0) {
            // Fill pixels never leave the blob's own box, so the search is local.
            auto regions = components(w, h, [&](int x, int y) {
                return owner[static_cast<std::size_t>(y + y0) * res + (x + x0)] == static_cast<int>(k);
            });
            inst.fragments = static_cast<int>(regions.size());
        }
        manifest.instances.push_back(std::move(inst));
    }
    out.manifest = std::move(manifest);
    return out;
}

DetectionReport sim_detect(const Image& image, const RenderManifest* manifest, std::span<const std::string> categories,
                           DetectMode mode, const std::map<std::string, Rgb>& palette_overrides) {
    DetectionReport report;
    for (const auto& c : categories)
        report.counts[c] = 0;
    bool use_manifest = mode == DetectMode::Manifest || (mode == DetectMode::Auto && manifest);
    if (use_manifest) {
        if (!manifest)
            throw BackendError("manifest-mode detection needs a render manifest");
        auto rendered = manifest->counts();
        for (auto& [c, n] : report.counts)
            if (auto it = rendered.find(c); it != rendered.end())
                n = it->second;
        return report;
    }
    Palette palette(categories, palette_overrides);
    for (const auto& c : categories) {
        const Rgb color = palette.color(c);
        auto regions = components(image.width, image.height, [&](int x, int y) { return image.at(x, y) == color; });
        report.counts[c] = static_cast<int>(regions.size());
        for (const auto& r : regions)
            report.boxes.push_back({c, r, 1.0});
    }
    return report;
}

double overlap_fraction(const Layout& layout) {
    if (layout.boxes.empty())
        return 0.0;
    std::vector<std::uint8_t> hit(layout.boxes.size(), 0);
    for (auto [i, j] : close_pairs(layout, 0.0)) {
        if (intersection_area(layout.boxes[i].bbox, layout.boxes[j].bbox) > 0)
            hit[i] = hit[j] = 1;
    }
    return static_cast<double>(std::count(hit.begin(), hit.end(), 1)) / static_cast<double>(hit.size());
}

double out_of_bounds_fraction(const Layout& layout) {
    if (layout.boxes.empty())
        return 0.0;
    int n = 0;
    for (const auto& b : layout.boxes)
        if (b.bbox.x0 < 0 || b.bbox.y0 < 0 || b.bbox.x1 > layout.resolution || b.bbox.y1 > layout.resolution)
            ++n;
    return static_cast<double>(n) / static_cast<double>(layout.boxes.size());
}

double sim_aesthetic(const Layout& layout, const Image&, const AestheticWeights& w) {
    double s = 1.0 - w.overlap * overlap_fraction(layout) - w.grid * grid_score(layout) -
               w.out_of_bounds * out_of_bounds_fraction(layout);
    return std::clamp(s, 0.0, 1.0);
}

GenerateResult SimGenerator::generate(const GenerateRequest& request) {
    SimConfig cfg = cfg_;
    cfg.noise_seed = mix_seed(cfg_.noise_seed, request.seed);
    return sim_generate(request.layout, cfg);
}

DetectionReport SimDetector::detect(const Image& image, const RenderManifest* manifest,
                                    std::span<const std::string> categories, double confidence) {
    return apply_confidence(sim_detect(image, manifest, categories, mode_, palette_), confidence);
}

std::optional<double> SimAesthetic::score(const Layout& layout, const Image& image) { return sim_aesthetic(layout, image); }

BackendSet make_sim_backends(const SimConfig& cfg, DetectMode mode) {
    BackendSet set;
    set.generator = std::make_shared<SimGenerator>(cfg);
    set.detector = std::make_shared<SimDetector>(mode, cfg.palette);
    set.aesthetic = std::make_shared<SimAesthetic>();
    return set;
}

void to_json(nlohmann::json& j, const RenderManifest& m) {
    auto instances = nlohmann::json::array();
    for (const auto& i : m.instances)
        instances.push_back({{"category", i.category}, {"members", i.members}, {"fragments", i.fragments}});
    j = nlohmann::json{{"instances", instances}, {"dropped", m.dropped}, {"counts", m.counts()}};
}

} // namespace countloop
