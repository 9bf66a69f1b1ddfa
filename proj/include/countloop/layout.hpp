// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "countloop/geometry.hpp"
#include "countloop/graph.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace countloop {

struct InstanceBox {
    std::string id;
    std::string category;
    PixelRect bbox;
    double depth = 0.5;
    int z = 0;  // paint order, far to near

    bool operator==(const InstanceBox&) const = default;
};

struct Layout {
    int resolution = 1024;
    std::vector<InstanceBox> boxes;

    std::map<std::string, int> category_counts() const;
    bool operator==(const Layout&) const = default;
};

struct LayoutLimits {
    double pack_limit = 0.55;
    int min_box_area = 16;
};

/// Maps each node to a box centered at round(pos * res) with extent size * res,
/// shifted (or, if larger than the canvas, clipped) to stay inside [0, res-1].
/// Throws CapacityError if the summed box area exceeds pack_limit of the canvas.
Layout realize_layout(const PlanningGraph& g, int resolution, const LayoutLimits& limits = {});

/// Recomputes z from depth: far-to-near, ties by node id.
void assign_paint_order(std::vector<InstanceBox>& boxes);

struct RelaxResult {
    Layout layout;
    int steps = 0;
    int residual_pairs = 0;
};

/// Damped force-directed separation. Overlapping (or too close) pairs are pushed
/// apart along their center line in proportion to penetration; box sizes, ids
/// and counts never change and boxes stay on the canvas. A layout that already
/// satisfies the gap constraint is returned unchanged. Best effort: the
/// returned layout is the best iterate seen, with its residual pair count.
RelaxResult relax_overlaps(const Layout& layout, double min_sep, int max_steps);

/// Index pairs whose box gap is below min_sep, in canonical (i < j) order.
std::vector<std::pair<std::size_t, std::size_t>> close_pairs(const Layout& layout, double min_sep);

inline constexpr double kGridCvReference = 0.25;

/// Lattice regularity from nearest-neighbour center distances:
/// 1 - clamp(cv / 0.25, 0, 1). Fewer than four boxes score 0.
double grid_score(const Layout& layout);

/// Shifts each center by an offset uniform in [-pos_range, pos_range] per axis,
/// rotated by a tilt uniform in [-angle_range, angle_range] degrees, then
/// clamped on canvas. Deterministic per seed.
Layout jitter(const Layout& layout, std::uint64_t seed, double pos_range, double angle_range);

/// Writes realized box centers back into the graph's normalized positions and
/// drops edges made direction-inconsistent by the move.
PlanningGraph sync_positions(const PlanningGraph& g, const Layout& layout);

void to_json(nlohmann::json& j, const InstanceBox& b);
void from_json(const nlohmann::json& j, InstanceBox& b);
void to_json(nlohmann::json& j, const Layout& l);
/// Throws SchemaError on malformed boxes.
void from_json(const nlohmann::json& j, Layout& l);

} // namespace countloop
