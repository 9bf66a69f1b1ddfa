// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "countloop/graph.hpp"
#include "countloop/layout.hpp"
#include "countloop/scoring.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace countloop {

enum class IssueType { Count, Spatial, Attribute };
enum class Severity { Critical, Major, Minor };

std::string_view to_string(IssueType t);
std::string_view to_string(Severity s);

struct Issue {
    IssueType type = IssueType::Attribute;
    Severity severity = Severity::Minor;
    std::string description;
    std::string suggested_fix;          // free text, as an LLM would write it
    std::optional<GraphEdit> fix;       // structured counterpart, when known

    // count issues
    std::optional<std::string> category;
    std::optional<int> detected;
    std::optional<int> target;
    // spatial issues
    std::vector<std::string> ids;       // offending pair, canonical order
    bool grid = false;
    // issue types outside the closed vocabulary are kept here verbatim
    std::optional<std::string> original_type;

    bool operator==(const Issue&) const = default;
};

/// Detected/target counts. The single-category form used in hand-written
/// critic replies ({"detected": 12, "target": 15}) is held under the empty
/// category key and written back as scalars.
struct CountAccuracy {
    CountMap detected;
    CountMap target;

    bool scalar() const { return detected.size() == 1 && detected.count("") == 1; }
    bool operator==(const CountAccuracy&) const = default;
};

struct Decision {
    bool continue_refinement = true;
    std::string reason;
    bool operator==(const Decision&) const = default;
};

struct CriticReport {
    CountAccuracy count_accuracy;
    double spatial_quality = 0.0;
    std::vector<Issue> issues;
    Decision decision;

    bool has_blocking_issue() const;  // any critical or major issue
    bool operator==(const CriticReport&) const = default;
};

struct CriticOptions {
    double min_sep = 8.0;
    double grid_flag_threshold = 0.9;
    double threshold = 0.85;
    bool inclusive_threshold = false;
    double spacing_min = 42.0;
    double spacing_max = 48.0;
    double angle_min = -3.0;
    double angle_max = 10.0;
    std::uint64_t seed = 0;  // forwarded into JitterSpacing fixes
};

/// Deterministic critic: one critical count issue per mismatched category, one
/// major spatial issue per too-close box pair (canonical id order) and one for a
/// grid-like arrangement. continue_refinement is set when a blocking issue
/// exists or the termination check fails.
CriticReport programmatic_critic(const Layout& layout, const DetectionReport& detected, const CountMap& targets,
                                 double aesthetic, double composite, const CriticOptions& opts = {});

/// Schema-validated report from an LLM reply. Unknown issue types become
/// attribute/minor with the original type preserved. Throws SchemaError/JsonError.
CriticReport parse_critic_json(std::string_view text);

/// Replaces the report's count_accuracy with the detector's counts and
/// re-derives the decision; the detector is authoritative.
CriticReport reconcile_with_detector(CriticReport report, const DetectionReport& detected, const CountMap& targets,
                                     bool terminated);

struct ImGradOptions {
    int resolution = 1024;
    double min_sep = 8.0;
    std::uint64_t seed = 0;
};

struct ImGradResult {
    std::vector<GraphEdit> edits;
    std::vector<std::string> warnings;  // dropped feedback (dangling ids, unknown categories)
};

/// Translates critic feedback into graph edits: count deficits become AddNodes
/// and surpluses RemoveNodes (sized against the graph's own node counts), close
/// pairs become Separate and grid flags JitterSpacing. Count edits come first.
/// Attribute issues are recorded without an edit.
ImGradResult imgrad(const PlanningGraph& g, const CriticReport& report, const ImGradOptions& opts = {});

/// Center distance at which two boxes of the given normalized sizes, placed
/// along `direction`, are separated by min_sep pixels.
double required_center_distance(Vec2 size_a, Vec2 size_b, Vec2 direction, int resolution, double min_sep);

void to_json(nlohmann::json& j, const Issue& i);
void from_json(const nlohmann::json& j, Issue& i);
void to_json(nlohmann::json& j, const CriticReport& r);
void from_json(const nlohmann::json& j, CriticReport& r);

} // namespace countloop
