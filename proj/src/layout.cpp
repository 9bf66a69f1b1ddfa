// SPDX-License-Identifier: Apache-2.0
#include "countloop/layout.hpp"

#include "countloop/error.hpp"
#include "countloop/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace countloop {

namespace {

constexpr int kMinSide = 4;

// Places [c - extent/2, c + extent/2] on the pixel axis, shifted inside
// [0, res-1] when it fits and clipped otherwise.
std::pair<int, int> place_axis(double center, double extent, int res) {
    int lo = static_cast<int>(std::lround(center - extent / 2));
    int hi = static_cast<int>(std::lround(center + extent / 2));
    if (hi - lo < kMinSide) {
        int mid = static_cast<int>(std::lround(center));
        lo = mid - kMinSide / 2;
        hi = lo + kMinSide;
    }
    const int limit = res - 1;
    if (hi - lo <= limit) {
        if (lo < 0) {
            hi -= lo;
            lo = 0;
        }
        if (hi > limit) {
            lo -= hi - limit;
            hi = limit;
        }
    } else {
        lo = 0;
        hi = limit;
    }
    return {lo, hi};
}

struct Body {
    double cx, cy;
    int w, h;
};

PixelRect rect_of(const Body& b) {
    int x0 = static_cast<int>(std::lround(b.cx - b.w / 2.0));
    int y0 = static_cast<int>(std::lround(b.cy - b.h / 2.0));
    return {x0, y0, x0 + b.w, y0 + b.h};
}

void clamp_body(Body& b, int res) {
    const double limit = res - 1;
    auto axis = [limit](double c, int extent) {
        if (extent >= limit)
            return limit / 2;
        return std::clamp(c, extent / 2.0, limit - extent / 2.0);
    };
    b.cx = axis(b.cx, b.w);
    b.cy = axis(b.cy, b.h);
}

Vec2 fallback_direction(const std::string& a, const std::string& b) {
    double angle = static_cast<double>(hash_string(a + "#" + b) % 3600) / 3600.0 * 2.0 * std::numbers::pi;
    return {std::cos(angle), std::sin(angle)};
}

std::vector<std::pair<std::size_t, std::size_t>> close_pairs_of(const std::vector<PixelRect>& rects, double min_sep) {
    std::vector<std::size_t> order(rects.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::tie(rects[a].x0, a) < std::tie(rects[b].x0, b);
    });
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
        const auto& a = rects[order[oi]];
        for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
            const auto& b = rects[order[oj]];
            if (b.x0 - a.x1 >= min_sep)
                break;
            if (box_gap(a, b) < min_sep)
                out.emplace_back(std::min(order[oi], order[oj]), std::max(order[oi], order[oj]));
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<PixelRect> rects_of(const Layout& l) {
    std::vector<PixelRect> r;
    r.reserve(l.boxes.size());
    for (const auto& b : l.boxes)
        r.push_back(b.bbox);
    return r;
}

std::vector<double> nearest_neighbour_distances(const Layout& l) {
    std::vector<double> out(l.boxes.size(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < l.boxes.size(); ++i)
        for (std::size_t j = i + 1; j < l.boxes.size(); ++j) {
            double d = std::hypot(l.boxes[i].bbox.center_x() - l.boxes[j].bbox.center_x(),
                                  l.boxes[i].bbox.center_y() - l.boxes[j].bbox.center_y());
            out[i] = std::min(out[i], d);
            out[j] = std::min(out[j], d);
        }
    return out;
}

} // namespace

std::map<std::string, int> Layout::category_counts() const {
    std::map<std::string, int> out;
    for (const auto& b : boxes)
        ++out[b.category];
    return out;
}

Layout realize_layout(const PlanningGraph& g, int resolution, const LayoutLimits& limits) {
    if (resolution < 2 * kMinSide)
        throw DimError(fmt::format("resolution {} is too small", resolution));
    Layout out;
    out.resolution = resolution;
    double total_area = 0.0;
    for (const auto& n : g.objects) {
        auto [x0, x1] = place_axis(std::lround(n.pos.x * resolution), n.size.x * resolution, resolution);
        auto [y0, y1] = place_axis(std::lround(n.pos.y * resolution), n.size.y * resolution, resolution);
        InstanceBox b{n.id, n.category, {x0, y0, x1, y1}, n.depth, 0};
        total_area += static_cast<double>(b.bbox.area());
        out.boxes.push_back(std::move(b));
    }
    const double canvas = static_cast<double>(resolution) * resolution;
    if (total_area > limits.pack_limit * canvas)
        throw CapacityError(fmt::format("boxes cover {:.0f}px^2, more than {} of the {}x{} canvas", total_area,
                                        limits.pack_limit, resolution, resolution));
    assign_paint_order(out.boxes);
    return out;
}

void assign_paint_order(std::vector<InstanceBox>& boxes) {
    std::vector<std::size_t> order(boxes.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (boxes[a].depth != boxes[b].depth)
            return boxes[a].depth > boxes[b].depth;
        return node_id_less(boxes[a].id, boxes[b].id);
    });
    for (std::size_t k = 0; k < order.size(); ++k)
        boxes[order[k]].z = static_cast<int>(k);
}

std::vector<std::pair<std::size_t, std::size_t>> close_pairs(const Layout& layout, double min_sep) {
    return close_pairs_of(rects_of(layout), min_sep);
}

RelaxResult relax_overlaps(const Layout& layout, double min_sep, int max_steps) {
    RelaxResult result{layout, 0, 0};
    auto pairs = close_pairs(layout, min_sep);
    result.residual_pairs = static_cast<int>(pairs.size());
    if (pairs.empty())
        return result;

    constexpr double kDamping = 0.7;
    const int res = layout.resolution;
    // Rounding each center to whole pixels can eat up to 1px of the gap.
    const double target = min_sep + 1.5;
    std::vector<Body> bodies;
    bodies.reserve(layout.boxes.size());
    for (const auto& b : layout.boxes)
        bodies.push_back({b.bbox.center_x(), b.bbox.center_y(), b.bbox.width(), b.bbox.height()});

    std::size_t best_pairs = pairs.size();
    std::vector<Body> best = bodies;
    int best_step = 0;
    std::vector<Vec2> push(bodies.size());

    for (int step = 1; step <= max_steps; ++step) {
        std::fill(push.begin(), push.end(), Vec2{});
        for (auto [i, j] : pairs) {
            const auto& a = bodies[i];
            const auto& b = bodies[j];
            double dx = b.cx - a.cx, dy = b.cy - a.cy;
            double len = std::hypot(dx, dy);
            Vec2 u = len > 1e-9 ? Vec2{dx / len, dy / len}
                                : fallback_direction(layout.boxes[i].id, layout.boxes[j].id);
            double gx = std::abs(dx) - 0.5 * (a.w + b.w);
            double gy = std::abs(dy) - 0.5 * (a.h + b.h);
            // Smallest shift along u that opens either axis gap to the target.
            double need = std::numeric_limits<double>::infinity();
            if (std::abs(u.x) > 1e-9)
                need = std::min(need, std::max(0.0, target - gx) / std::abs(u.x));
            if (std::abs(u.y) > 1e-9)
                need = std::min(need, std::max(0.0, target - gy) / std::abs(u.y));
            double half = 0.5 * kDamping * need;
            push[i].x -= u.x * half;
            push[i].y -= u.y * half;
            push[j].x += u.x * half;
            push[j].y += u.y * half;
        }
        double moved = 0.0;
        for (std::size_t k = 0; k < bodies.size(); ++k) {
            Body before = bodies[k];
            bodies[k].cx += push[k].x;
            bodies[k].cy += push[k].y;
            clamp_body(bodies[k], res);
            moved = std::max(moved, std::hypot(bodies[k].cx - before.cx, bodies[k].cy - before.cy));
        }
        std::vector<PixelRect> rects;
        rects.reserve(bodies.size());
        for (const auto& b : bodies)
            rects.push_back(rect_of(b));
        pairs = close_pairs_of(rects, min_sep);
        result.steps = step;
        if (pairs.size() < best_pairs) {
            best_pairs = pairs.size();
            best = bodies;
            best_step = step;
        }
        if (pairs.empty() || moved < 0.5)
            break;
    }

    if (best_step > 0)
        for (std::size_t k = 0; k < bodies.size(); ++k)
            result.layout.boxes[k].bbox = rect_of(best[k]);
    result.residual_pairs = static_cast<int>(best_pairs);
    return result;
}

double grid_score(const Layout& layout) {
    if (layout.boxes.size() < 4)
        return 0.0;
    auto nn = nearest_neighbour_distances(layout);
    double mean = std::accumulate(nn.begin(), nn.end(), 0.0) / static_cast<double>(nn.size());
    if (mean <= 0.0)
        return 1.0;
    double var = 0.0;
    for (double d : nn)
        var += (d - mean) * (d - mean);
    double cv = std::sqrt(var / static_cast<double>(nn.size())) / mean;
    return 1.0 - std::clamp(cv / kGridCvReference, 0.0, 1.0);
}

Layout jitter(const Layout& layout, std::uint64_t seed, double pos_range, double angle_range) {
    Layout out = layout;
    Rng rng(seed);
    const int res = layout.resolution;
    for (auto& box : out.boxes) {
        const auto src = box.bbox;
        double dx = rng.uniform(-pos_range, pos_range), dy = rng.uniform(-pos_range, pos_range);
        double tilt = rng.uniform(-angle_range, angle_range) * std::numbers::pi / 180.0;
        Body b{src.center_x() + dx * std::cos(tilt) - dy * std::sin(tilt),
               src.center_y() + dx * std::sin(tilt) + dy * std::cos(tilt), src.width(), src.height()};
        clamp_body(b, res);
        box.bbox = rect_of(b);
    }
    return out;
}

PlanningGraph sync_positions(const PlanningGraph& g, const Layout& layout) {
    PlanningGraph out = g;
    const double res = layout.resolution;
    for (const auto& b : layout.boxes)
        for (auto& n : out.objects)
            if (n.id == b.id) {
                n.pos = {std::clamp(b.bbox.center_x() / res, 0.0, 1.0), std::clamp(b.bbox.center_y() / res, 0.0, 1.0)};
                break;
            }
    std::erase_if(out.relations, [&](const RelationEdge& e) { return !direction_consistent(e, out); });
    return out;
}

void to_json(nlohmann::json& j, const InstanceBox& b) {
    j = nlohmann::json{{"id", b.id}, {"category", b.category}, {"bbox", b.bbox}, {"depth", b.depth}, {"z", b.z}};
}

void from_json(const nlohmann::json& j, InstanceBox& b) {
    if (!j.is_object())
        throw SchemaError("layout box must be a JSON object");
    try {
        b.id = j.at("id").get<std::string>();
        b.category = j.at("category").get<std::string>();
        b.bbox = j.at("bbox").get<PixelRect>();
        b.depth = j.value("depth", 0.5);
        b.z = j.value("z", 0);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed layout box: ") + e.what());
    }
    if (b.bbox.width() <= 0 || b.bbox.height() <= 0)
        throw SchemaError("layout box '" + b.id + "' is degenerate");
}

void to_json(nlohmann::json& j, const Layout& l) {
    j = nlohmann::json{{"resolution", l.resolution}, {"boxes", l.boxes}};
}

void from_json(const nlohmann::json& j, Layout& l) {
    if (!j.is_object() || !j.contains("boxes") || !j["boxes"].is_array())
        throw SchemaError("layout requires a \"boxes\" array");
    l.resolution = j.value("resolution", 1024);
    l.boxes = j["boxes"].get<std::vector<InstanceBox>>();
}

} // namespace countloop
