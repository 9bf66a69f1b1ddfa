// SPDX-License-Identifier: Apache-2.0
#include "countloop/critic.hpp"

#include "countloop/backends.hpp"
#include "countloop/error.hpp"
#include "countloop/json_extract.hpp"
#include "countloop/nouns.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <regex>
#include <set>

namespace countloop {

namespace {

constexpr std::array<std::pair<IssueType, std::string_view>, 3> kIssueTypes{{
    {IssueType::Count, "count"},
    {IssueType::Spatial, "spatial"},
    {IssueType::Attribute, "attribute"},
}};

constexpr std::array<std::pair<Severity, std::string_view>, 3> kSeverities{{
    {Severity::Critical, "critical"},
    {Severity::Major, "major"},
    {Severity::Minor, "minor"},
}};

std::string noun(const std::string& category, long long n) { return n == 1 ? category : pluralize(category); }

Vec2 normalized_center(const PixelRect& r, double res) { return {r.center_x() / res, r.center_y() / res}; }
Vec2 normalized_size(const PixelRect& r, double res) { return {r.width() / res, r.height() / res}; }

// Suggested spots for k new instances, each placed in the largest free region
// left after the previous ones.
std::vector<Vec2> free_positions(std::vector<Vec2> centers, std::vector<Vec2> sizes, Vec2 size, int k) {
    std::vector<Vec2> out;
    for (int i = 0; i < k; ++i) {
        Vec2 p = largest_empty_position(centers, sizes, size);
        p = {std::round(p.x * 100) / 100, std::round(p.y * 100) / 100};
        out.push_back(p);
        centers.push_back(p);
        sizes.push_back(size);
    }
    return out;
}

std::string format_positions(const std::vector<Vec2>& ps) {
    std::vector<std::string> parts;
    for (auto p : ps)
        parts.push_back(fmt::format("[{:.2f}, {:.2f}]", p.x, p.y));
    return fmt::format("{}", fmt::join(parts, ", "));
}

struct Footprint {
    std::string id;
    std::string category;
    double x0, y0, x1, y1;
};

double overlap(const Footprint& a, const Footprint& b) {
    double w = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
    double h = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
    return w > 0 && h > 0 ? w * h : 0.0;
}

// Surplus instances to drop: largest total overlap first, ties to the highest id.
std::vector<std::string> removal_order(const std::vector<Footprint>& all, const std::string& category, int k) {
    std::vector<std::pair<double, std::string>> scored;
    for (const auto& f : all) {
        if (f.category != category)
            continue;
        double sum = 0.0;
        for (const auto& other : all)
            if (&other != &f)
                sum += overlap(f, other);
        scored.emplace_back(sum, f.id);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first)
            return a.first > b.first;
        return node_id_less(b.second, a.second);
    });
    std::vector<std::string> out;
    for (int i = 0; i < k && i < static_cast<int>(scored.size()); ++i)
        out.push_back(scored[static_cast<std::size_t>(i)].second);
    return out;
}

std::vector<Footprint> footprints(const Layout& layout) {
    std::vector<Footprint> out;
    for (const auto& b : layout.boxes)
        out.push_back({b.id, b.category, double(b.bbox.x0), double(b.bbox.y0), double(b.bbox.x1), double(b.bbox.y1)});
    return out;
}

std::vector<Footprint> footprints(const PlanningGraph& g, int res) {
    std::vector<Footprint> out;
    for (const auto& n : g.objects)
        out.push_back({n.id, n.category, (n.pos.x - n.size.x / 2) * res, (n.pos.y - n.size.y / 2) * res,
                       (n.pos.x + n.size.x / 2) * res, (n.pos.y + n.size.y / 2) * res});
    return out;
}

bool mismatched(const CountAccuracy& ca) {
    for (const auto& [category, target] : ca.target) {
        auto it = ca.detected.find(category);
        if ((it == ca.detected.end() ? 0 : it->second) != target)
            return true;
    }
    return false;
}

std::string decision_reason(const CriticReport& r, bool score_ok) {
    int counts = 0, spatial = 0;
    for (const auto& i : r.issues) {
        if (i.type == IssueType::Count)
            ++counts;
        else if (i.type == IssueType::Spatial && i.severity != Severity::Minor)
            ++spatial;
    }
    if (counts > 0)
        return fmt::format("count mismatch in {} {}", counts, counts == 1 ? "category" : "categories");
    if (mismatched(r.count_accuracy))
        return "detected counts differ from targets";
    if (spatial > 0)
        return fmt::format("{} spatial {} to resolve", spatial, spatial == 1 ? "issue" : "issues");
    if (!score_ok)
        return "composite score below threshold";
    return "counts exact and score above threshold";
}

CountMap read_count_field(const nlohmann::json& v, const char* what) {
    CountMap out;
    if (v.is_number_integer()) {
        if (v.get<long long>() < 0)
            throw SchemaError(std::string(what) + " must be non-negative");
        out[""] = v.get<int>();
        return out;
    }
    if (!v.is_object())
        throw SchemaError(std::string(what) + " must be an integer or a category map");
    for (const auto& [k, n] : v.items()) {
        if (!n.is_number_integer() || n.get<long long>() < 0)
            throw SchemaError(std::string(what) + " for '" + k + "' must be a non-negative integer");
        out[k] = n.get<int>();
    }
    return out;
}

const std::regex& node_id_pattern() {
    static const std::regex re(R"(([a-z][a-z ]*?)[ _](\d+))", std::regex::icase);
    return re;
}

// Subscript digits (U+2080..U+2089) become plain ones; "cup₇" reads as "cup_7".
std::string plain_digits(const std::string& text) {
    std::string out;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (i + 2 < text.size() && text[i] == '\xE2' && text[i + 1] == '\x82' && static_cast<unsigned char>(text[i + 2]) >= 0x80 &&
            static_cast<unsigned char>(text[i + 2]) <= 0x89) {
            if (!out.empty() && std::isalpha(static_cast<unsigned char>(out.back())))
                out += '_';
            out += static_cast<char>('0' + (static_cast<unsigned char>(text[i + 2]) - 0x80));
            i += 2;
            continue;
        }
        out += text[i];
    }
    return out;
}

// Pulls existing node ids out of free text such as "cup_7 is overlapping with cup_3".
std::vector<std::string> ids_in_text(const std::string& text, const PlanningGraph& g) {
    std::vector<std::string> out;
    auto lowered = to_lower(plain_digits(text));
    for (std::sregex_iterator it(lowered.begin(), lowered.end(), node_id_pattern()), end; it != end; ++it) {
        std::string category = trim((*it)[1].str());
        // Longest known category suffix of the matched words wins ("hot air balloon 3").
        std::string hit;
        for (const auto& n : g.objects) {
            auto id = make_node_id(n.category, std::stoi((*it)[2].str()));
            if (category.size() >= n.category.size() &&
                category.compare(category.size() - n.category.size(), std::string::npos, n.category) == 0 &&
                g.find(id) && id.size() > hit.size())
                hit = id;
        }
        if (!hit.empty() && std::find(out.begin(), out.end(), hit) == out.end())
            out.push_back(hit);
    }
    return out;
}

} // namespace

std::string_view to_string(IssueType t) {
    for (auto [v, name] : kIssueTypes)
        if (v == t)
            return name;
    return "attribute";
}

std::string_view to_string(Severity s) {
    for (auto [v, name] : kSeverities)
        if (v == s)
            return name;
    return "minor";
}

bool CriticReport::has_blocking_issue() const {
    return std::any_of(issues.begin(), issues.end(), [](const Issue& i) { return i.severity != Severity::Minor; });
}

double required_center_distance(Vec2 size_a, Vec2 size_b, Vec2 direction, int resolution, double min_sep) {
    double len = std::hypot(direction.x, direction.y);
    Vec2 u = len > 1e-12 ? Vec2{direction.x / len, direction.y / len} : Vec2{1.0, 0.0};
    // One extra pixel absorbs rounding when the boxes are realized.
    const double margin = min_sep + 1.0;
    double need = std::numeric_limits<double>::infinity();
    if (std::abs(u.x) > 1e-12)
        need = std::min(need, (margin + 0.5 * (size_a.x + size_b.x) * resolution) / std::abs(u.x));
    if (std::abs(u.y) > 1e-12)
        need = std::min(need, (margin + 0.5 * (size_a.y + size_b.y) * resolution) / std::abs(u.y));
    return need;
}

CriticReport programmatic_critic(const Layout& layout, const DetectionReport& detected, const CountMap& targets,
                                 double aesthetic, double composite, const CriticOptions& opts) {
    (void)aesthetic;
    CriticReport r;
    const double res = layout.resolution;
    std::vector<Vec2> centers, sizes;
    for (const auto& b : layout.boxes) {
        centers.push_back(normalized_center(b.bbox, res));
        sizes.push_back(normalized_size(b.bbox, res));
    }
    auto prints = footprints(layout);

    for (const auto& [category, target] : targets) {
        int det = detected.count(category);
        r.count_accuracy.detected[category] = det;
        r.count_accuracy.target[category] = target;
        if (det == target)
            continue;
        Issue issue;
        issue.type = IssueType::Count;
        issue.severity = Severity::Critical;
        issue.category = category;
        issue.detected = det;
        issue.target = target;
        if (det < target) {
            int k = target - det;
            Vec2 size = default_size(category);
            for (const auto& b : layout.boxes)
                if (b.category == category) {
                    size = normalized_size(b.bbox, res);
                    break;
                }
            auto spots = free_positions(centers, sizes, size, k);
            issue.description = fmt::format("{} {} missing", k, noun(category, k));
            auto range = k == 1 ? std::to_string(det + 1) : fmt::format("{}-{}", det + 1, target);
            issue.suggested_fix = fmt::format("Add {} {} at {}", noun(category, k), range, format_positions(spots));
            issue.fix = edit::AddNodes{category, k, spots};
        } else {
            int k = det - target;
            auto ids = removal_order(prints, category, k);
            issue.description = fmt::format("{} extra {}", k, noun(category, k));
            issue.suggested_fix = ids.empty() ? fmt::format("Remove {} {}", k, noun(category, k))
                                              : fmt::format("Remove {}", fmt::join(ids, ", "));
            if (!ids.empty())
                issue.fix = edit::RemoveNodes{ids};
        }
        r.issues.push_back(std::move(issue));
    }

    auto pairs = close_pairs(layout, opts.min_sep);
    std::vector<std::pair<std::string, std::string>> named;
    for (auto [i, j] : pairs) {
        const auto& a = layout.boxes[i];
        const auto& b = layout.boxes[j];
        named.emplace_back(node_id_less(b.id, a.id) ? std::pair{b.id, a.id} : std::pair{a.id, b.id});
    }
    std::sort(named.begin(), named.end(), [](const auto& x, const auto& y) {
        if (x.first != y.first)
            return node_id_less(x.first, y.first);
        return node_id_less(x.second, y.second);
    });
    auto box_of = [&](const std::string& id) -> const InstanceBox& {
        return *std::find_if(layout.boxes.begin(), layout.boxes.end(), [&](const InstanceBox& b) { return b.id == id; });
    };
    for (const auto& [ida, idb] : named) {
        const auto& a = box_of(ida);
        const auto& b = box_of(idb);
        Issue issue;
        issue.type = IssueType::Spatial;
        issue.severity = Severity::Major;
        issue.ids = {ida, idb};
        bool touching = intersection_area(a.bbox, b.bbox) > 0;
        issue.description = touching ? fmt::format("{} is overlapping with {}", ida, idb)
                                     : fmt::format("{} is too close to {}", ida, idb);
        Vec2 dir{b.bbox.center_x() - a.bbox.center_x(), b.bbox.center_y() - a.bbox.center_y()};
        double dist = required_center_distance(normalized_size(a.bbox, res), normalized_size(b.bbox, res), dir,
                                               layout.resolution, opts.min_sep);
        issue.suggested_fix = fmt::format("Move {} and {} apart to {:.0f}px between centers", ida, idb, std::ceil(dist));
        issue.fix = edit::Separate{ida, idb, dist};
        r.issues.push_back(std::move(issue));
    }

    double grid = grid_score(layout);
    if (grid > opts.grid_flag_threshold) {
        Issue issue;
        issue.type = IssueType::Spatial;
        issue.severity = Severity::Major;
        issue.grid = true;
        issue.description = "Artificial grid pattern";
        issue.suggested_fix = fmt::format("Vary spacing ({}-{}px) and angles ({} to +{} degrees)", opts.spacing_min,
                                          opts.spacing_max, opts.angle_min, opts.angle_max);
        issue.fix = edit::JitterSpacing{opts.spacing_min, opts.spacing_max, opts.angle_min, opts.angle_max, opts.seed};
        r.issues.push_back(std::move(issue));
    }

    r.spatial_quality = std::clamp(1.0 - overlap_fraction(layout) - 0.3 * grid, 0.0, 1.0);
    bool score_ok = termination_check(composite, detected.counts, targets, opts.threshold, opts.inclusive_threshold);
    r.decision.continue_refinement = r.has_blocking_issue() || !score_ok;
    r.decision.reason = decision_reason(r, score_ok);
    return r;
}

CriticReport parse_critic_json(std::string_view text) {
    CriticReport report;
    first_schema_valid(text, [&](const nlohmann::json& j) { report = j.get<CriticReport>(); });
    return report;
}

CriticReport reconcile_with_detector(CriticReport report, const DetectionReport& detected, const CountMap& targets,
                                     bool terminated) {
    report.count_accuracy = {};
    for (const auto& [category, target] : targets) {
        report.count_accuracy.detected[category] = detected.count(category);
        report.count_accuracy.target[category] = target;
    }
    bool exact = !mismatched(report.count_accuracy);
    // Count claims the detector contradicts are dropped; the detector decides.
    std::erase_if(report.issues, [&](const Issue& i) { return i.type == IssueType::Count && exact; });
    report.decision.continue_refinement = report.has_blocking_issue() || !terminated || !exact;
    if (report.decision.reason.empty() || exact == report.decision.continue_refinement)
        report.decision.reason = decision_reason(report, terminated);
    return report;
}

ImGradResult imgrad(const PlanningGraph& g, const CriticReport& report, const ImGradOptions& opts) {
    ImGradResult out;
    auto graph_counts = g.category_counts();

    // Count edits, from the (detector-backed) count_accuracy block.
    CountMap targets;
    for (const auto& [category, target] : report.count_accuracy.target) {
        if (category.empty()) {
            if (graph_counts.size() == 1)
                targets[graph_counts.begin()->first] = target;
            else
                out.warnings.push_back("scalar count feedback is ambiguous for a multi-category graph");
            continue;
        }
        targets[category] = target;
    }
    auto seeded_positions = [&](const std::string& category) -> std::vector<Vec2> {
        for (const auto& i : report.issues)
            if (i.fix)
                if (auto* add = std::get_if<edit::AddNodes>(&*i.fix); add && add->category == category)
                    return add->seed_positions;
        return {};
    };

    std::set<std::string> renumbered;
    std::vector<GraphEdit> count_edits, spatial_edits;
    auto prints = footprints(g, opts.resolution);
    for (const auto& [category, target] : targets) {
        int have = graph_counts.count(category) ? graph_counts[category] : 0;
        if (have < target) {
            auto seeds = seeded_positions(category);
            if (static_cast<int>(seeds.size()) > target - have)
                seeds.resize(static_cast<std::size_t>(target - have));
            count_edits.push_back(edit::AddNodes{category, target - have, seeds});
        } else if (have > target) {
            count_edits.push_back(edit::RemoveNodes{removal_order(prints, category, have - target)});
            renumbered.insert(category);
        }
    }

    std::set<std::pair<std::string, std::string>> separated;
    bool jittered = false;
    for (const auto& issue : report.issues) {
        if (issue.type == IssueType::Attribute) {
            out.warnings.push_back("recorded without an edit: " + issue.description);
            continue;
        }
        if (issue.type != IssueType::Spatial)
            continue;
        bool is_grid = issue.grid || to_lower(issue.description).find("grid") != std::string::npos;
        if (is_grid) {
            if (jittered)
                continue;
            edit::JitterSpacing j;
            if (issue.fix)
                if (auto* given = std::get_if<edit::JitterSpacing>(&*issue.fix))
                    j = *given;
            j.seed = opts.seed;
            spatial_edits.push_back(j);
            jittered = true;
            continue;
        }
        auto ids = issue.ids.size() == 2 ? issue.ids : ids_in_text(issue.description, g);
        if (ids.size() != 2) {
            out.warnings.push_back("spatial issue without a resolvable node pair: " + issue.description);
            continue;
        }
        const auto* a = g.find(ids[0]);
        const auto* b = g.find(ids[1]);
        if (!a || !b) {
            out.warnings.push_back(fmt::format("dropped feedback on unknown nodes {} / {}", ids[0], ids[1]));
            continue;
        }
        if (renumbered.count(a->category) || renumbered.count(b->category))
            continue;
        if (node_id_less(b->id, a->id))
            std::swap(a, b);
        if (!separated.insert({a->id, b->id}).second)
            continue;
        Vec2 dir{b->pos.x - a->pos.x, b->pos.y - a->pos.y};
        spatial_edits.push_back(
            edit::Separate{a->id, b->id, required_center_distance(a->size, b->size, dir, opts.resolution, opts.min_sep)});
    }

    out.edits = std::move(count_edits);
    out.edits.insert(out.edits.end(), spatial_edits.begin(), spatial_edits.end());
    return out;
}

// --- JSON ---------------------------------------------------------------------

void to_json(nlohmann::json& j, const Issue& i) {
    j = nlohmann::json{{"type", i.original_type.value_or(std::string(to_string(i.type)))},
                       {"severity", to_string(i.severity)},
                       {"description", i.description},
                       {"suggested_fix", i.suggested_fix}};
    if (i.fix)
        j["fix"] = edit_to_json(*i.fix);
    if (i.category)
        j["category"] = *i.category;
    if (i.detected)
        j["detected"] = *i.detected;
    if (i.target)
        j["target"] = *i.target;
    if (!i.ids.empty())
        j["ids"] = i.ids;
    if (i.grid)
        j["grid"] = true;
}

void from_json(const nlohmann::json& j, Issue& i) {
    i = Issue{};
    if (!j.is_object())
        throw SchemaError("issue must be a JSON object");
    auto str = [&](const char* key, bool required) -> std::optional<std::string> {
        auto it = j.find(key);
        if (it == j.end() || it->is_null()) {
            if (required)
                throw SchemaError(std::string("issue requires \"") + key + "\"");
            return std::nullopt;
        }
        if (!it->is_string())
            throw SchemaError(std::string("issue field \"") + key + "\" must be a string");
        return it->get<std::string>();
    };
    auto type = *str("type", true);
    bool known = false;
    for (auto [v, name] : kIssueTypes)
        if (name == to_lower(trim(type))) {
            i.type = v;
            known = true;
        }
    i.severity = i.type == IssueType::Count ? Severity::Critical : i.type == IssueType::Spatial ? Severity::Major : Severity::Minor;
    if (!known) {
        i.type = IssueType::Attribute;
        i.severity = Severity::Minor;
        i.original_type = type;
    }
    if (auto sev = str("severity", false); sev && known) {
        bool found = false;
        for (auto [v, name] : kSeverities)
            if (name == to_lower(trim(*sev))) {
                i.severity = v;
                found = true;
            }
        if (!found)
            throw SchemaError("unknown severity '" + *sev + "'");
    }
    i.description = str("description", true).value_or("");
    i.suggested_fix = str("suggested_fix", false).value_or("");
    if (auto fix = j.find("fix"); fix != j.end() && !fix->is_null())
        i.fix = edit_from_json(*fix);
    i.category = str("category", false);
    auto integer = [&](const char* key) -> std::optional<int> {
        auto it = j.find(key);
        if (it == j.end() || it->is_null())
            return std::nullopt;
        if (!it->is_number_integer())
            throw SchemaError(std::string("issue field \"") + key + "\" must be an integer");
        return it->get<int>();
    };
    i.detected = integer("detected");
    i.target = integer("target");
    if (auto ids = j.find("ids"); ids != j.end() && !ids->is_null()) {
        if (!ids->is_array())
            throw SchemaError("issue \"ids\" must be an array");
        for (const auto& v : *ids) {
            if (!v.is_string())
                throw SchemaError("issue ids must be strings");
            i.ids.push_back(v.get<std::string>());
        }
    }
    if (auto grid = j.find("grid"); grid != j.end() && grid->is_boolean())
        i.grid = grid->get<bool>();
}

void to_json(nlohmann::json& j, const CriticReport& r) {
    nlohmann::json ca;
    if (r.count_accuracy.scalar()) {
        ca["detected"] = r.count_accuracy.detected.at("");
        ca["target"] = r.count_accuracy.target.count("") ? r.count_accuracy.target.at("") : 0;
    } else {
        ca["detected"] = r.count_accuracy.detected;
        ca["target"] = r.count_accuracy.target;
    }
    j = nlohmann::json{{"evaluation", {{"count_accuracy", ca}, {"spatial_quality", r.spatial_quality}}},
                       {"issues", r.issues},
                       {"decision",
                        {{"continue_refinement", r.decision.continue_refinement}, {"reason", r.decision.reason}}}};
}

void from_json(const nlohmann::json& j, CriticReport& r) {
    r = CriticReport{};
    if (!j.is_object())
        throw SchemaError("critic reply must be a JSON object");
    auto eval = j.find("evaluation");
    if (eval == j.end() || !eval->is_object())
        throw SchemaError("critic reply requires an \"evaluation\" object");
    auto ca = eval->find("count_accuracy");
    if (ca == eval->end() || !ca->is_object() || !ca->contains("detected") || !ca->contains("target"))
        throw SchemaError("evaluation requires count_accuracy with \"detected\" and \"target\"");
    r.count_accuracy.detected = read_count_field((*ca)["detected"], "detected");
    r.count_accuracy.target = read_count_field((*ca)["target"], "target");
    if (r.count_accuracy.detected.count("") != r.count_accuracy.target.count(""))
        throw SchemaError("count_accuracy mixes scalar and per-category forms");
    auto sq = eval->find("spatial_quality");
    if (sq == eval->end() || !sq->is_number())
        throw SchemaError("evaluation requires a numeric \"spatial_quality\"");
    r.spatial_quality = sq->get<double>();
    if (r.spatial_quality < 0.0 || r.spatial_quality > 1.0)
        throw SchemaError("spatial_quality must lie in [0,1]");
    if (auto issues = j.find("issues"); issues != j.end() && !issues->is_null()) {
        if (!issues->is_array())
            throw SchemaError("\"issues\" must be an array");
        for (const auto& i : *issues)
            r.issues.push_back(i.get<Issue>());
    }
    // Either placement of the decision block is accepted.
    const nlohmann::json* decision = nullptr;
    if (auto d = j.find("decision"); d != j.end())
        decision = &*d;
    else if (auto d2 = eval->find("decision"); d2 != eval->end())
        decision = &*d2;
    if (decision) {
        if (!decision->is_object() || !decision->contains("continue_refinement") ||
            !(*decision)["continue_refinement"].is_boolean())
            throw SchemaError("decision requires a boolean \"continue_refinement\"");
        r.decision.continue_refinement = (*decision)["continue_refinement"].get<bool>();
        if (auto reason = decision->find("reason"); reason != decision->end() && reason->is_string())
            r.decision.reason = reason->get<std::string>();
    } else {
        r.decision.continue_refinement = r.has_blocking_issue() || mismatched(r.count_accuracy);
        r.decision.reason = decision_reason(r, true);
    }
}

} // namespace countloop
