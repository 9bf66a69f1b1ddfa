// SPDX-License-Identifier: Apache-2.0
#include "countloop/geometry.hpp"

#include "countloop/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace countloop {

long long intersection_area(const PixelRect& a, const PixelRect& b) {
    long long w = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
    long long h = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
    return (w > 0 && h > 0) ? w * h : 0;
}

double iou(const PixelRect& a, const PixelRect& b) {
    auto inter = intersection_area(a, b);
    if (inter == 0)
        return 0.0;
    return static_cast<double>(inter) / static_cast<double>(a.area() + b.area() - inter);
}

double box_gap(const PixelRect& a, const PixelRect& b) {
    double gx = std::max(a.x0, b.x0) - std::min(a.x1, b.x1);
    double gy = std::max(a.y0, b.y0) - std::min(a.y1, b.y1);
    return std::max(gx, gy);
}

double box_gap(Vec2 ca, Vec2 sa, Vec2 cb, Vec2 sb) {
    double gx = std::abs(ca.x - cb.x) - 0.5 * (sa.x + sb.x);
    double gy = std::abs(ca.y - cb.y) - 0.5 * (sa.y + sb.y);
    return std::max(gx, gy);
}

Vec2 largest_empty_position(std::span<const Vec2> centers, std::span<const Vec2> sizes, Vec2 size, int grid) {
    const double lo_x = std::min(0.5, size.x / 2), hi_x = std::max(0.5, 1.0 - size.x / 2);
    const double lo_y = std::min(0.5, size.y / 2), hi_y = std::max(0.5, 1.0 - size.y / 2);
    Vec2 best{0.5, 0.5};
    double best_score = -std::numeric_limits<double>::infinity();
    for (int gy = 0; gy < grid; ++gy) {
        for (int gx = 0; gx < grid; ++gx) {
            Vec2 c{lo_x + (hi_x - lo_x) * (gx + 0.5) / grid, lo_y + (hi_y - lo_y) * (gy + 0.5) / grid};
            double score = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < centers.size() && score > best_score; ++i)
                score = std::min(score, box_gap(c, size, centers[i], sizes[i]));
            if (score > best_score) {
                best_score = score;
                best = c;
            }
        }
    }
    return best;
}

void to_json(nlohmann::json& j, const PixelRect& r) { j = nlohmann::json::array({r.x0, r.y0, r.x1, r.y1}); }

void from_json(const nlohmann::json& j, PixelRect& r) {
    if (!j.is_array() || j.size() != 4)
        throw SchemaError("bbox must be [x0, y0, x1, y1]");
    for (const auto& v : j)
        if (!v.is_number())
            throw SchemaError("bbox entries must be numbers");
    r = {static_cast<int>(std::lround(j[0].get<double>())), static_cast<int>(std::lround(j[1].get<double>())),
         static_cast<int>(std::lround(j[2].get<double>())), static_cast<int>(std::lround(j[3].get<double>()))};
}

} // namespace countloop
