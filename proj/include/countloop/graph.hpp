// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "countloop/geometry.hpp"
#include "countloop/prompt.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace countloop {

enum class Relation { Above, Below, LeftOf, RightOf, Near, On };

std::string_view to_string(Relation r);
/// Accepts "left-of", "left of", "left_of" and friends.
std::optional<Relation> relation_from_string(std::string_view s);

/// One object instance. Coordinates are normalized, x right and y down.
struct ObjectNode {
    std::string id;        // "<category>_<k>"
    std::string category;
    Vec2 pos;              // center, [0,1]^2
    double depth = 0.5;    // 0 = nearest
    Vec2 size;             // width/height, (0,1]^2
    std::optional<std::string> color;
    std::vector<std::string> attributes;

    bool operator==(const ObjectNode&) const = default;
};

struct RelationEdge {
    std::string source;
    std::string target;
    Relation relation = Relation::Near;
    double dist = 0.0;   // advisory, pixels
    double angle = 0.0;  // advisory, degrees

    bool operator==(const RelationEdge&) const = default;
};

struct PlanningGraph {
    std::vector<ObjectNode> objects;
    std::vector<RelationEdge> relations;
    std::string context;

    std::map<std::string, int> category_counts() const;
    const ObjectNode* find(std::string_view id) const;
    bool operator==(const PlanningGraph&) const = default;
};

std::string make_node_id(std::string_view category, int index);
/// Splits "cat_3" or "cat 3" into ("cat", 3).
std::optional<std::pair<std::string, int>> split_node_id(std::string_view id);
/// Natural order on ids: category first, then numeric suffix.
bool node_id_less(std::string_view a, std::string_view b);

namespace edit {
struct AddNodes {
    std::string category;
    int count = 0;
    std::vector<Vec2> seed_positions;
    bool operator==(const AddNodes&) const = default;
};
struct RemoveNodes {
    std::vector<std::string> ids;
    bool operator==(const RemoveNodes&) const = default;
};
struct Separate {
    std::string id_a;
    std::string id_b;
    double min_separation = 0.0;  // center distance, pixels; boxes are also pushed clear by EditOptions::min_sep
    bool operator==(const Separate&) const = default;
};
struct MoveNode {
    std::string id;
    Vec2 pos;
    bool operator==(const MoveNode&) const = default;
};
struct JitterSpacing {
    double spacing_min = 42.0;  // pixels
    double spacing_max = 48.0;
    double angle_min = -3.0;    // degrees
    double angle_max = 10.0;
    std::uint64_t seed = 0;
    bool operator==(const JitterSpacing&) const = default;
};
struct SetContext {
    std::string text;
    bool operator==(const SetContext&) const = default;
};
} // namespace edit

using GraphEdit = std::variant<edit::AddNodes, edit::RemoveNodes, edit::Separate, edit::MoveNode,
                               edit::JitterSpacing, edit::SetContext>;

struct Violation {
    enum class Kind { Range, DuplicateId, IdPrefix, Numbering, DanglingEdge, SelfEdge, Direction };
    Kind kind;
    std::string subject;
    std::string message;
};

/// Normalized tolerance for directional relations.
inline constexpr double kDirectionTolerance = 0.02;

struct PlacementPolicy {
    int resolution = 1024;
    double min_sep = 8.0;              // pixels
    double pack_limit = 0.55;          // max box area / canvas area
    double min_box_area = 16.0;        // pixels^2
    double footprint_density = 0.45;   // (box + min_sep margin) area / canvas area
    int candidates = 24;               // best-candidate samples per node
};

struct EditOptions {
    int resolution = 1024;
    double min_sep = 8.0;
};

/// Rule-based planner used when no LLM is attached: blue-noise (best-candidate)
/// placement with sizes from the category table, scaled down to fit, depth from
/// vertical position, and "below" edges toward sky-bound categories.
/// Throws CapacityError when the instances cannot fit at minimum size.
PlanningGraph build_graph(const PromptSpec& spec, std::uint64_t seed, const PlacementPolicy& policy = {});

std::vector<Violation> validate_graph(const PlanningGraph& g);
bool direction_consistent(const RelationEdge& e, const PlanningGraph& g);

/// Sorts edges by (source, target, relation).
PlanningGraph canonicalize(PlanningGraph g);

/// Textual rendering with ['Object'], ['Relation'] and ['Context'] sections.
std::string graph_to_prompt(const PlanningGraph& g);

/// Applies edits in order. Edges whose endpoints moved and became
/// direction-inconsistent are dropped. Throws EditError on dangling ids or an
/// invalid result.
PlanningGraph apply_edits(const PlanningGraph& g, std::span<const GraphEdit> edits, const EditOptions& opts = {});

/// Default extent for a category, from the bundled size table.
Vec2 default_size(std::string_view category);

void to_json(nlohmann::json& j, const ObjectNode& n);
void from_json(const nlohmann::json& j, ObjectNode& n);
void to_json(nlohmann::json& j, const RelationEdge& e);
void from_json(const nlohmann::json& j, RelationEdge& e);
void to_json(nlohmann::json& j, const PlanningGraph& g);
/// Throws SchemaError on missing keys or unknown relation tokens.
void from_json(const nlohmann::json& j, PlanningGraph& g);

nlohmann::json edit_to_json(const GraphEdit& e);
GraphEdit edit_from_json(const nlohmann::json& j);
std::string describe(const GraphEdit& e);

} // namespace countloop
