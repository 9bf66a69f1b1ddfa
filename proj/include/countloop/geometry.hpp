// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json.hpp>

#include <compare>
#include <span>
#include <vector>

namespace countloop {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Vec2&) const = default;
};

/// Integer pixel rectangle [x0, y0, x1, y1] with x0 < x1 and y0 < y1.
struct PixelRect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    long long area() const { return static_cast<long long>(width()) * height(); }
    double center_x() const { return 0.5 * (x0 + x1); }
    double center_y() const { return 0.5 * (y0 + y1); }
    bool operator==(const PixelRect&) const = default;
};

long long intersection_area(const PixelRect& a, const PixelRect& b);
double iou(const PixelRect& a, const PixelRect& b);

/// Axis-separation gap between two rectangles: the larger of the horizontal and
/// vertical gaps. Negative when the rectangles overlap (penetration depth).
double box_gap(const PixelRect& a, const PixelRect& b);

/// Same gap on centers/extents in arbitrary units.
double box_gap(Vec2 center_a, Vec2 size_a, Vec2 center_b, Vec2 size_b);

/// Largest-empty-circle style placement: among a regular grid of candidates
/// over the unit square that keep a box of `size` inside, returns the one that
/// maximizes the smallest box gap to all existing boxes. Ties resolve to the
/// first candidate in row-major order.
Vec2 largest_empty_position(std::span<const Vec2> centers, std::span<const Vec2> sizes, Vec2 size,
                            int grid = 48);

void to_json(nlohmann::json& j, const PixelRect& r);
void from_json(const nlohmann::json& j, PixelRect& r);

} // namespace countloop
