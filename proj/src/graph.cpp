// SPDX-License-Identifier: Apache-2.0
#include "countloop/graph.hpp"

#include "countloop/embedded_data.hpp"
#include "countloop/error.hpp"
#include "countloop/nouns.hpp"
#include "countloop/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

namespace countloop {

namespace {

constexpr std::array<std::pair<Relation, std::string_view>, 6> kRelationNames{{
    {Relation::Above, "above"},
    {Relation::Below, "below"},
    {Relation::LeftOf, "left-of"},
    {Relation::RightOf, "right-of"},
    {Relation::Near, "near"},
    {Relation::On, "on"},
}};

const std::set<std::string, std::less<>> kSkyWords{"sky", "air", "flying", "above", "overhead", "ceiling", "clouds"};

bool sky_bound(const PromptSpec& spec, const std::string& category) {
    auto it = spec.attributes.find(category);
    if (it == spec.attributes.end())
        return false;
    for (const auto& phrase : it->second) {
        std::istringstream in(phrase);
        std::string word;
        while (in >> word)
            if (kSkyWords.count(word))
                return true;
    }
    return false;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Keeps a box of the given normalized size inside the unit canvas when it fits.
Vec2 clamp_center(Vec2 p, Vec2 size) {
    auto axis = [](double v, double extent) {
        if (extent >= 1.0)
            return 0.5;
        return std::clamp(v, extent / 2, 1.0 - extent / 2);
    };
    return {axis(p.x, size.x), axis(p.y, size.y)};
}

ObjectNode* find_mut(PlanningGraph& g, std::string_view id) {
    for (auto& n : g.objects)
        if (n.id == id)
            return &n;
    return nullptr;
}

ObjectNode& require(PlanningGraph& g, const std::string& id) {
    auto* n = find_mut(g, id);
    if (!n)
        throw EditError("edit references unknown node '" + id + "'");
    return *n;
}

double pixel_distance(Vec2 a, Vec2 b, int res) { return std::hypot((a.x - b.x) * res, (a.y - b.y) * res); }

Vec2 direction_for_pair(const std::string& a, const std::string& b) {
    double angle = static_cast<double>(hash_string(a + "|" + b) % 3600) / 3600.0 * 2.0 * std::numbers::pi;
    return {std::cos(angle), std::sin(angle)};
}

void prune_inconsistent(PlanningGraph& g) {
    std::erase_if(g.relations, [&](const RelationEdge& e) {
        return !g.find(e.source) || !g.find(e.target) || !direction_consistent(e, g);
    });
}

void apply_one(PlanningGraph& g, const edit::AddNodes& e, const EditOptions&) {
    if (e.count < 0)
        throw EditError("AddNodes count must be non-negative");
    auto category = trim(e.category);
    if (category.empty())
        throw EditError("AddNodes needs a category");
    int existing = 0;
    const ObjectNode* exemplar = nullptr;
    double depth_sum = 0.0;
    for (const auto& n : g.objects)
        if (n.category == category) {
            ++existing;
            depth_sum += n.depth;
            if (!exemplar)
                exemplar = &n;
        }
    ObjectNode proto;
    proto.category = category;
    proto.size = exemplar ? exemplar->size : default_size(category);
    proto.depth = existing ? depth_sum / existing : 0.5;
    if (exemplar) {
        proto.color = exemplar->color;
        proto.attributes = exemplar->attributes;
    }
    for (int k = 0; k < e.count; ++k) {
        ObjectNode node = proto;
        node.id = make_node_id(category, existing + k + 1);
        if (static_cast<std::size_t>(k) < e.seed_positions.size()) {
            node.pos = clamp_center(e.seed_positions[static_cast<std::size_t>(k)], node.size);
        } else {
            std::vector<Vec2> centers, sizes;
            centers.reserve(g.objects.size());
            sizes.reserve(g.objects.size());
            for (const auto& n : g.objects) {
                centers.push_back(n.pos);
                sizes.push_back(n.size);
            }
            node.pos = largest_empty_position(centers, sizes, node.size);
        }
        g.objects.push_back(std::move(node));
    }
}

void apply_one(PlanningGraph& g, const edit::RemoveNodes& e, const EditOptions&) {
    std::set<std::string> doomed;
    std::set<std::string> touched_categories;
    for (const auto& id : e.ids) {
        touched_categories.insert(require(g, id).category);
        doomed.insert(id);
    }
    std::erase_if(g.objects, [&](const ObjectNode& n) { return doomed.count(n.id) > 0; });
    std::erase_if(g.relations, [&](const RelationEdge& r) { return doomed.count(r.source) || doomed.count(r.target); });

    // Keep suffixes contiguous: survivors are renumbered 1..k in their old order.
    std::map<std::string, std::string> renamed;
    for (const auto& category : touched_categories) {
        std::vector<ObjectNode*> members;
        for (auto& n : g.objects)
            if (n.category == category)
                members.push_back(&n);
        std::stable_sort(members.begin(), members.end(),
                         [](const ObjectNode* a, const ObjectNode* b) { return node_id_less(a->id, b->id); });
        for (std::size_t k = 0; k < members.size(); ++k) {
            auto fresh = make_node_id(category, static_cast<int>(k) + 1);
            if (fresh != members[k]->id)
                renamed[members[k]->id] = fresh;
            members[k]->id = fresh;
        }
    }
    for (auto& r : g.relations) {
        if (auto it = renamed.find(r.source); it != renamed.end())
            r.source = it->second;
        if (auto it = renamed.find(r.target); it != renamed.end())
            r.target = it->second;
    }
}

// Pushes a and b apart along u until their centers are `want` pixels apart.
// share_a is the fraction of the move a takes; whatever one node cannot take
// at the canvas edge goes to the other.
void push_apart(ObjectNode& a, ObjectNode& b, Vec2 u, double want, int res, double share_a = 0.5) {
    for (int pass = 0; pass < 4; ++pass) {
        double dist = pixel_distance(a.pos, b.pos, res);
        if (dist >= want)
            return;
        if (pass > 0 && dist > 1e-9)
            u = {(b.pos.x - a.pos.x) * res / dist, (b.pos.y - a.pos.y) * res / dist};
        double deficit = (want - dist) / res;
        Vec2 a0 = a.pos, b0 = b.pos;
        a.pos = clamp_center({a.pos.x - u.x * deficit * share_a, a.pos.y - u.y * deficit * share_a}, a.size);
        double a_moved = std::hypot(a.pos.x - a0.x, a.pos.y - a0.y);
        double b_share = deficit - a_moved;
        b.pos = clamp_center({b.pos.x + u.x * b_share, b.pos.y + u.y * b_share}, b.size);
        double b_moved = std::hypot(b.pos.x - b0.x, b.pos.y - b0.y);
        if (b_moved + 1e-12 < b_share) {
            double extra = b_share - b_moved;
            a.pos = clamp_center({a.pos.x - u.x * extra, a.pos.y - u.y * extra}, a.size);
        }
    }
}

double node_gap(const ObjectNode& a, const ObjectNode& b, int res) {
    double gx = std::abs(a.pos.x - b.pos.x) - 0.5 * (a.size.x + b.size.x);
    double gy = std::abs(a.pos.y - b.pos.y) - 0.5 * (a.size.y + b.size.y);
    return std::max(gx, gy) * res;
}

void apply_one(PlanningGraph& g, const edit::Separate& e, const EditOptions& opts) {
    if (e.id_a == e.id_b)
        throw EditError("Separate needs two distinct nodes");
    auto& a = require(g, e.id_a);
    auto& b = require(g, e.id_b);
    const int res = opts.resolution;
    double dist = pixel_distance(a.pos, b.pos, res);
    if (dist >= e.min_separation)
        return;
    Vec2 line = dist > 1e-9 ? Vec2{(b.pos.x - a.pos.x) * res / dist, (b.pos.y - a.pos.y) * res / dist}
                            : direction_for_pair(a.id, b.id);
    // The center line comes first; other headings are tried only when it
    // would crowd a third node.
    // Touching a third node costs 1, overlapping it costs 3.
    auto cost = [&](const ObjectNode& x, const ObjectNode& c) {
        double gap = node_gap(x, c, res);
        return gap < 0 ? 3 : gap < opts.min_sep + 2 ? 1 : 0;
    };
    auto crowding = [&](const ObjectNode& x, const ObjectNode& y) {
        int n = 0;
        for (const auto& c : g.objects)
            if (c.id != x.id && c.id != y.id)
                n += cost(x, c) + cost(y, c);
        return n;
    };
    const ObjectNode a0 = a, b0 = b;
    ObjectNode best_a = a, best_b = b;
    int best_crowding = std::numeric_limits<int>::max();
    bool best_reached = false;
    // Splits: both move, then only b, then only a.
    for (int step = 0; step < 72; ++step) {
        int heading = step / 3;
        double share_a = step % 3 == 0 ? 0.5 : step % 3 == 1 ? 0.0 : 1.0;
        double turn = (heading % 2 ? 1 : -1) * ((heading + 1) / 2) * std::numbers::pi / 12.0;
        Vec2 u{line.x * std::cos(turn) - line.y * std::sin(turn), line.x * std::sin(turn) + line.y * std::cos(turn)};
        ObjectNode ta = a0, tb = b0;
        // The boxes may need more room than asked for to clear each other.
        double clear = std::numeric_limits<double>::infinity();
        if (std::abs(u.x) > 1e-9)
            clear = std::min(clear, (0.5 * (a0.size.x + b0.size.x) * res + opts.min_sep + 1) / std::abs(u.x));
        if (std::abs(u.y) > 1e-9)
            clear = std::min(clear, (0.5 * (a0.size.y + b0.size.y) * res + opts.min_sep + 1) / std::abs(u.y));
        double want = std::max(e.min_separation, clear);
        push_apart(ta, tb, u, want, res, share_a);
        bool reached = pixel_distance(ta.pos, tb.pos, res) + 1e-9 >= e.min_separation &&
                       node_gap(ta, tb, res) >= opts.min_sep;
        int crowd = crowding(ta, tb);
        if ((reached && !best_reached) || (reached == best_reached && crowd < best_crowding)) {
            best_a = ta;
            best_b = tb;
            best_crowding = crowd;
            best_reached = reached;
        }
        if (reached && crowd == 0)
            break;
    }
    // In a jammed neighbourhood, moving one node to the emptiest spot on the
    // canvas can beat any local push.
    if (!best_reached || best_crowding > 0) {
        for (int which = 0; which < 2; ++which) {
            ObjectNode ta = a0, tb = b0;
            ObjectNode& mover = which == 0 ? tb : ta;
            std::vector<Vec2> centers, sizes;
            for (const auto& c : g.objects)
                if (c.id != mover.id) {
                    centers.push_back(c.pos);
                    sizes.push_back(c.size);
                }
            mover.pos = largest_empty_position(centers, sizes, mover.size);
            bool reached = pixel_distance(ta.pos, tb.pos, res) + 1e-9 >= e.min_separation &&
                           node_gap(ta, tb, res) >= opts.min_sep;
            int crowd = crowding(ta, tb);
            if ((reached && !best_reached) || (reached == best_reached && crowd < best_crowding)) {
                best_a = ta;
                best_b = tb;
                best_crowding = crowd;
                best_reached = reached;
            }
        }
    }
    a.pos = best_a.pos;
    b.pos = best_b.pos;
}

void apply_one(PlanningGraph& g, const edit::MoveNode& e, const EditOptions&) {
    auto& n = require(g, e.id);
    n.pos = {clamp01(e.pos.x), clamp01(e.pos.y)};
}

void apply_one(PlanningGraph& g, const edit::JitterSpacing& e, const EditOptions& opts) {
    if (e.spacing_max < e.spacing_min || e.angle_max < e.angle_min)
        throw EditError("JitterSpacing ranges are inverted");
    if (g.objects.size() < 2)
        return;
    Rng rng(e.seed);
    const double res = opts.resolution;
    for (std::size_t i = 0; i < g.objects.size(); ++i) {
        auto& node = g.objects[i];
        std::size_t nearest = i;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < g.objects.size(); ++k) {
            if (k == i)
                continue;
            double d = pixel_distance(node.pos, g.objects[k].pos, opts.resolution);
            if (d < best) {
                best = d;
                nearest = k;
            }
        }
        const auto& anchor = g.objects[nearest].pos;
        double spacing = rng.uniform(e.spacing_min, e.spacing_max);
        double tilt = rng.uniform(e.angle_min, e.angle_max) * std::numbers::pi / 180.0;
        double heading = best > 1e-9 ? std::atan2(node.pos.y - anchor.y, node.pos.x - anchor.x)
                                     : rng.uniform(0.0, 2.0 * std::numbers::pi);
        heading += tilt;
        node.pos = clamp_center({anchor.x + std::cos(heading) * spacing / res, anchor.y + std::sin(heading) * spacing / res},
                                node.size);
    }
}

void apply_one(PlanningGraph& g, const edit::SetContext& e, const EditOptions&) { g.context = e.text; }

struct SizeTable {
    std::map<std::string, Vec2, std::less<>> sizes;
    Vec2 fallback{0.12, 0.12};

    SizeTable() {
        for (auto line : data::lines(data::category_sizes())) {
            std::istringstream in{std::string(line)};
            std::vector<std::string> words;
            std::string w;
            while (in >> w)
                words.push_back(w);
            if (words.size() < 3)
                continue;
            Vec2 size{std::stod(words[words.size() - 2]), std::stod(words.back())};
            std::string name;
            for (std::size_t k = 0; k + 2 < words.size(); ++k)
                name += (k ? " " : "") + words[k];
            if (name == "default")
                fallback = size;
            else
                sizes.emplace(name, size);
        }
    }
};

std::string fmt_double(double v) { return fmt::format("{}", v); }
std::string json_quoted(const std::string& s) { return nlohmann::json(s).dump(); }

} // namespace

std::string_view to_string(Relation r) {
    for (auto [rel, name] : kRelationNames)
        if (rel == r)
            return name;
    return "near";
}

std::optional<Relation> relation_from_string(std::string_view s) {
    auto norm = to_lower(trim(s));
    std::replace(norm.begin(), norm.end(), ' ', '-');
    std::replace(norm.begin(), norm.end(), '_', '-');
    if (norm == "left") norm = "left-of";
    if (norm == "right") norm = "right-of";
    if (norm == "on-top-of") norm = "on";
    for (auto [rel, name] : kRelationNames)
        if (name == norm)
            return rel;
    return std::nullopt;
}

std::map<std::string, int> PlanningGraph::category_counts() const {
    std::map<std::string, int> out;
    for (const auto& n : objects)
        ++out[n.category];
    return out;
}

const ObjectNode* PlanningGraph::find(std::string_view id) const {
    for (const auto& n : objects)
        if (n.id == id)
            return &n;
    return nullptr;
}

std::string make_node_id(std::string_view category, int index) { return fmt::format("{}_{}", category, index); }

std::optional<std::pair<std::string, int>> split_node_id(std::string_view id) {
    auto cut = id.find_last_of(" _");
    if (cut == std::string_view::npos || cut == 0 || cut + 1 >= id.size())
        return std::nullopt;
    auto digits = id.substr(cut + 1);
    if (digits.size() > 9 || !std::all_of(digits.begin(), digits.end(), [](unsigned char c) { return std::isdigit(c); }))
        return std::nullopt;
    return std::pair{std::string(id.substr(0, cut)), std::stoi(std::string(digits))};
}

bool node_id_less(std::string_view a, std::string_view b) {
    auto sa = split_node_id(a), sb = split_node_id(b);
    if (sa && sb)
        return *sa < *sb;
    return a < b;
}

Vec2 default_size(std::string_view category) {
    static const SizeTable table;
    if (auto it = table.sizes.find(category); it != table.sizes.end())
        return it->second;
    return table.fallback;
}

bool direction_consistent(const RelationEdge& e, const PlanningGraph& g) {
    const auto* s = g.find(e.source);
    const auto* t = g.find(e.target);
    if (!s || !t)
        return false;
    const double eps = kDirectionTolerance;
    switch (e.relation) {
    case Relation::Below: return s->pos.y >= t->pos.y + eps;
    case Relation::Above: return s->pos.y <= t->pos.y - eps;
    case Relation::LeftOf: return s->pos.x <= t->pos.x - eps;
    case Relation::RightOf: return s->pos.x >= t->pos.x + eps;
    case Relation::Near:
    case Relation::On: return true;
    }
    return true;
}

std::vector<Violation> validate_graph(const PlanningGraph& g) {
    using K = Violation::Kind;
    std::vector<Violation> out;
    std::set<std::string> seen;
    std::map<std::string, std::vector<int>> suffixes;
    for (const auto& n : g.objects) {
        auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
        auto in01_open = [](double v) { return v > 0.0 && v <= 1.0; };
        if (!in01(n.pos.x) || !in01(n.pos.y))
            out.push_back({K::Range, n.id, fmt::format("pos [{}, {}] outside [0,1]^2", n.pos.x, n.pos.y)});
        if (!in01(n.depth))
            out.push_back({K::Range, n.id, fmt::format("depth {} outside [0,1]", n.depth)});
        if (!in01_open(n.size.x) || !in01_open(n.size.y))
            out.push_back({K::Range, n.id, fmt::format("size [{}, {}] outside (0,1]^2", n.size.x, n.size.y)});
        if (!seen.insert(n.id).second)
            out.push_back({K::DuplicateId, n.id, "duplicate node id"});
        auto split = split_node_id(n.id);
        if (!split || split->first != n.category)
            out.push_back({K::IdPrefix, n.id, "id prefix does not match category '" + n.category + "'"});
        else
            suffixes[n.category].push_back(split->second);
    }
    for (auto& [category, list] : suffixes) {
        std::sort(list.begin(), list.end());
        for (std::size_t k = 0; k < list.size(); ++k)
            if (list[k] != static_cast<int>(k) + 1) {
                out.push_back({K::Numbering, category, "id suffixes are not 1.." + std::to_string(list.size())});
                break;
            }
    }
    for (const auto& e : g.relations) {
        auto subject = e.source + "->" + e.target;
        if (e.source == e.target) {
            out.push_back({K::SelfEdge, subject, "relation from a node to itself"});
            continue;
        }
        if (!g.find(e.source) || !g.find(e.target)) {
            out.push_back({K::DanglingEdge, subject, "relation endpoint does not exist"});
            continue;
        }
        if (!direction_consistent(e, g))
            out.push_back({K::Direction, subject, fmt::format("'{}' contradicts node positions", to_string(e.relation))});
    }
    return out;
}

PlanningGraph canonicalize(PlanningGraph g) {
    std::stable_sort(g.relations.begin(), g.relations.end(), [](const RelationEdge& a, const RelationEdge& b) {
        return std::tie(a.source, a.target, a.relation) < std::tie(b.source, b.target, b.relation);
    });
    return g;
}

std::string graph_to_prompt(const PlanningGraph& g) {
    auto canonical = canonicalize(g);
    std::string out = "['Object']\n";
    for (const auto& n : canonical.objects) {
        out += fmt::format("{}: category {}, pos [{}, {}], d {}, size [{}, {}]", json_quoted(n.id), json_quoted(n.category),
                           fmt_double(n.pos.x), fmt_double(n.pos.y), fmt_double(n.depth), fmt_double(n.size.x),
                           fmt_double(n.size.y));
        if (n.color)
            out += ", color " + json_quoted(*n.color);
        if (!n.attributes.empty())
            out += ", attributes " + nlohmann::json(n.attributes).dump();
        out += '\n';
    }
    out += "['Relation']\n";
    for (const auto& e : canonical.relations)
        out += fmt::format("{} {} {}, dist {}, angle {}\n", json_quoted(e.source), to_string(e.relation), json_quoted(e.target),
                           fmt_double(e.dist), fmt_double(e.angle));
    out += "['Context']\n" + json_quoted(canonical.context) + "\n";
    return out;
}

PlanningGraph apply_edits(const PlanningGraph& g, std::span<const GraphEdit> edits, const EditOptions& opts) {
    if (edits.empty())
        return g;
    PlanningGraph out = g;
    for (const auto& e : edits)
        std::visit([&](const auto& concrete) { apply_one(out, concrete, opts); }, e);
    prune_inconsistent(out);
    auto violations = validate_graph(out);
    if (!violations.empty())
        throw EditError("edited graph is invalid: " + violations.front().subject + ": " + violations.front().message);
    return out;
}

PlanningGraph build_graph(const PromptSpec& spec, std::uint64_t seed, const PlacementPolicy& policy) {
    if (spec.targets.empty())
        throw ParseError("prompt spec has no targets");
    const double res = policy.resolution;
    const double min_side = std::ceil(std::sqrt(policy.min_box_area)) / res;
    const double sep = policy.min_sep / res;

    struct Band {
        double y_lo, y_hi;
        std::vector<std::string> categories;
    };
    std::vector<std::string> sky, ground;
    for (const auto& [category, n] : spec.targets) {
        if (n < 1)
            throw ParseError("target counts must be at least one");
        (sky_bound(spec, category) ? sky : ground).push_back(category);
    }
    std::vector<Band> bands;
    if (!sky.empty() && !ground.empty()) {
        bands.push_back({0.0, 0.44, sky});
        bands.push_back({0.5, 1.0, ground});
    } else {
        bands.push_back({0.0, 1.0, sky.empty() ? ground : sky});
    }

    PlanningGraph g;
    g.context = spec.context.value_or("");
    Rng rng(seed);
    std::map<std::string, Vec2> sizes;

    for (const auto& band : bands) {
        const double band_area = band.y_hi - band.y_lo;
        auto footprint = [&](double scale) {
            double total = 0.0;
            for (const auto& c : band.categories) {
                Vec2 s = default_size(c);
                double w = std::max(s.x * scale, min_side), h = std::max(s.y * scale, min_side);
                total += spec.targets.at(c) * (w + sep) * (h + sep);
            }
            return total;
        };
        if (footprint(0.0) > policy.pack_limit * band_area)
            throw CapacityError(fmt::format("{} instances cannot fit the {}px canvas at minimum size",
                                            spec.total(), policy.resolution));
        double scale = 1.0;
        const double budget = policy.footprint_density * band_area;
        if (footprint(1.0) > budget) {
            double lo = 0.0, hi = 1.0;
            for (int it = 0; it < 60; ++it) {
                double mid = 0.5 * (lo + hi);
                (footprint(mid) > budget ? hi : lo) = mid;
            }
            scale = lo;
        }
        for (const auto& c : band.categories) {
            Vec2 s = default_size(c);
            sizes[c] = {std::min(1.0, std::max(s.x * scale, min_side)), std::min(1.0, std::max(s.y * scale, min_side))};
        }
    }

    // Best-candidate (Mitchell) sampling per band: blue noise without a lattice.
    for (const auto& band : bands) {
        const std::size_t first_in_band = g.objects.size();
        for (const auto& category : band.categories) {
            const Vec2 size = sizes[category];
            const auto attrs_it = spec.attributes.find(category);
            for (int k = 1; k <= spec.targets.at(category); ++k) {
                auto sample = [&] {
                    double x_lo = size.x / 2, x_hi = 1.0 - size.x / 2;
                    double y_lo = std::min(band.y_lo + size.y / 2, 0.5), y_hi = std::max(band.y_hi - size.y / 2, y_lo);
                    return Vec2{x_hi > x_lo ? rng.uniform(x_lo, x_hi) : 0.5, rng.uniform(y_lo, y_hi)};
                };
                Vec2 pos;
                if (g.objects.size() == first_in_band) {
                    double cy = 0.5 * (band.y_lo + band.y_hi);
                    pos = clamp_center({0.5 + rng.uniform(-0.05, 0.05), cy + rng.uniform(-0.05, 0.05)}, size);
                } else {
                    double best = -std::numeric_limits<double>::infinity();
                    for (int c = 0; c < policy.candidates; ++c) {
                        Vec2 cand = sample();
                        double score = std::numeric_limits<double>::infinity();
                        for (std::size_t i = first_in_band; i < g.objects.size() && score > best; ++i)
                            score = std::min(score, box_gap(cand, size, g.objects[i].pos, g.objects[i].size));
                        if (score > best) {
                            best = score;
                            pos = cand;
                        }
                    }
                }
                ObjectNode node;
                node.id = make_node_id(category, k);
                node.category = category;
                node.pos = pos;
                node.size = size;
                node.depth = bands.size() > 1 && &band == &bands.front() ? 0.2 : std::clamp(1.0 - pos.y, 0.05, 0.95);
                if (attrs_it != spec.attributes.end())
                    node.attributes = attrs_it->second;
                g.objects.push_back(std::move(node));
            }
        }
    }

    // Every ground node sits "below" its nearest sky-bound node.
    if (bands.size() > 1) {
        std::vector<const ObjectNode*> sky_nodes, ground_nodes;
        std::set<std::string> sky_set(sky.begin(), sky.end());
        for (const auto& n : g.objects)
            (sky_set.count(n.category) ? sky_nodes : ground_nodes).push_back(&n);
        for (const auto* gn : ground_nodes) {
            const ObjectNode* nearest = nullptr;
            double best = std::numeric_limits<double>::infinity();
            for (const auto* sn : sky_nodes) {
                double d = pixel_distance(gn->pos, sn->pos, policy.resolution);
                if (d < best) {
                    best = d;
                    nearest = sn;
                }
            }
            RelationEdge e;
            e.source = gn->id;
            e.target = nearest->id;
            e.relation = Relation::Below;
            e.dist = std::round(best);
            e.angle = std::round(std::atan2(gn->pos.y - nearest->pos.y, nearest->pos.x - gn->pos.x) * 180.0 / std::numbers::pi);
            if (direction_consistent(e, g))
                g.relations.push_back(std::move(e));
        }
    }
    return g;
}

// --- JSON ---------------------------------------------------------------------

void to_json(nlohmann::json& j, const ObjectNode& n) {
    j = nlohmann::json{{"id", n.id},
                       {"category", n.category},
                       {"pos", {n.pos.x, n.pos.y}},
                       {"d", n.depth},
                       {"size", {n.size.x, n.size.y}}};
    if (n.color)
        j["color"] = *n.color;
    j["attributes"] = n.attributes;
}

namespace {

Vec2 read_pair(const nlohmann::json& v, const char* what) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        throw SchemaError(std::string(what) + " must be a two-number array");
    return {v[0].get<double>(), v[1].get<double>()};
}

const nlohmann::json* first_of(const nlohmann::json& j, std::initializer_list<const char*> keys) {
    for (const char* k : keys)
        if (auto it = j.find(k); it != j.end() && !it->is_null())
            return &*it;
    return nullptr;
}

std::string normalize_id(const std::string& raw) {
    auto t = trim(raw);
    if (auto split = split_node_id(t))
        return make_node_id(trim(split->first), split->second);
    return t;
}

} // namespace

void from_json(const nlohmann::json& j, ObjectNode& n) {
    n = ObjectNode{};
    if (!j.is_object())
        throw SchemaError("object node must be a JSON object");
    const auto* id = first_of(j, {"id"});
    if (!id || !id->is_string())
        throw SchemaError("object node requires a string \"id\"");
    n.id = normalize_id(id->get<std::string>());
    if (const auto* c = first_of(j, {"category"}); c && c->is_string()) {
        n.category = trim(c->get<std::string>());
    } else if (auto split = split_node_id(n.id)) {
        n.category = split->first;
    } else {
        throw SchemaError("object node '" + n.id + "' has no category");
    }
    const auto* pos = first_of(j, {"pos", "position"});
    if (!pos)
        throw SchemaError("object node '" + n.id + "' requires \"pos\"");
    n.pos = read_pair(*pos, "pos");
    if (const auto* d = first_of(j, {"d", "depth"})) {
        if (!d->is_number())
            throw SchemaError("depth must be a number");
        n.depth = d->get<double>();
    }
    if (const auto* s = first_of(j, {"size"}))
        n.size = read_pair(*s, "size");
    else
        n.size = default_size(n.category);
    if (const auto* c = first_of(j, {"color"}); c && c->is_string())
        n.color = c->get<std::string>();
    if (const auto* a = first_of(j, {"attributes"}); a && a->is_array())
        for (const auto& v : *a)
            if (v.is_string())
                n.attributes.push_back(v.get<std::string>());
}

void to_json(nlohmann::json& j, const RelationEdge& e) {
    j = nlohmann::json{{"from", e.source}, {"to", e.target}, {"relation", to_string(e.relation)}, {"dist", e.dist},
                       {"angle", e.angle}};
}

void from_json(const nlohmann::json& j, RelationEdge& e) {
    e = RelationEdge{};
    if (!j.is_object())
        throw SchemaError("relation must be a JSON object");
    const auto* from = first_of(j, {"from", "source"});
    const auto* to = first_of(j, {"to", "target"});
    const auto* rel = first_of(j, {"relation", "r"});
    if (!from || !to || !from->is_string() || !to->is_string())
        throw SchemaError("relation requires \"from\"/\"to\" (or \"source\"/\"target\")");
    if (!rel || !rel->is_string())
        throw SchemaError("relation requires a \"relation\" token");
    auto parsed = relation_from_string(rel->get<std::string>());
    if (!parsed)
        throw SchemaError("unknown relation '" + rel->get<std::string>() + "'");
    e.source = normalize_id(from->get<std::string>());
    e.target = normalize_id(to->get<std::string>());
    e.relation = *parsed;
    if (const auto* d = first_of(j, {"dist", "distance"}); d && d->is_number())
        e.dist = d->get<double>();
    if (const auto* a = first_of(j, {"angle"}); a && a->is_number())
        e.angle = a->get<double>();
}

void to_json(nlohmann::json& j, const PlanningGraph& g) {
    j = nlohmann::json{{"objects", g.objects}, {"relations", g.relations}, {"context", g.context}};
}

void from_json(const nlohmann::json& j, PlanningGraph& g) {
    g = PlanningGraph{};
    if (!j.is_object())
        throw SchemaError("planning graph must be a JSON object");
    auto objects = j.find("objects");
    if (objects == j.end() || !objects->is_array())
        throw SchemaError("planning graph requires an \"objects\" array");
    for (const auto& o : *objects)
        g.objects.push_back(o.get<ObjectNode>());
    if (auto rel = j.find("relations"); rel != j.end() && !rel->is_null()) {
        if (!rel->is_array())
            throw SchemaError("\"relations\" must be an array");
        for (const auto& r : *rel)
            g.relations.push_back(r.get<RelationEdge>());
    }
    if (auto ctx = j.find("context"); ctx != j.end() && ctx->is_string())
        g.context = ctx->get<std::string>();
}

nlohmann::json edit_to_json(const GraphEdit& e) {
    return std::visit(
        [](const auto& x) -> nlohmann::json {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, edit::AddNodes>) {
                nlohmann::json pos = nlohmann::json::array();
                for (auto p : x.seed_positions)
                    pos.push_back({p.x, p.y});
                return {{"op", "add_nodes"}, {"category", x.category}, {"count", x.count}, {"positions", pos}};
            } else if constexpr (std::is_same_v<T, edit::RemoveNodes>) {
                return {{"op", "remove_nodes"}, {"ids", x.ids}};
            } else if constexpr (std::is_same_v<T, edit::Separate>) {
                return {{"op", "separate"}, {"ids", {x.id_a, x.id_b}}, {"min_separation", x.min_separation}};
            } else if constexpr (std::is_same_v<T, edit::MoveNode>) {
                return {{"op", "move_node"}, {"id", x.id}, {"pos", {x.pos.x, x.pos.y}}};
            } else if constexpr (std::is_same_v<T, edit::JitterSpacing>) {
                return {{"op", "jitter_spacing"},
                        {"spacing", {x.spacing_min, x.spacing_max}},
                        {"angle", {x.angle_min, x.angle_max}},
                        {"seed", x.seed}};
            } else {
                return {{"op", "set_context"}, {"text", x.text}};
            }
        },
        e);
}

GraphEdit edit_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("op") || !j["op"].is_string())
        throw SchemaError("graph edit requires an \"op\"");
    auto op = j["op"].get<std::string>();
    try {
        if (op == "add_nodes") {
            edit::AddNodes e{j.at("category").get<std::string>(), j.at("count").get<int>(), {}};
            if (auto p = j.find("positions"); p != j.end())
                for (const auto& v : *p)
                    e.seed_positions.push_back(read_pair(v, "position"));
            return e;
        }
        if (op == "remove_nodes")
            return edit::RemoveNodes{j.at("ids").get<std::vector<std::string>>()};
        if (op == "separate") {
            auto ids = j.at("ids").get<std::vector<std::string>>();
            if (ids.size() != 2)
                throw SchemaError("separate needs exactly two ids");
            return edit::Separate{ids[0], ids[1], j.at("min_separation").get<double>()};
        }
        if (op == "move_node")
            return edit::MoveNode{j.at("id").get<std::string>(), read_pair(j.at("pos"), "pos")};
        if (op == "jitter_spacing") {
            auto s = read_pair(j.at("spacing"), "spacing");
            auto a = read_pair(j.at("angle"), "angle");
            return edit::JitterSpacing{s.x, s.y, a.x, a.y, j.value("seed", std::uint64_t{0})};
        }
        if (op == "set_context")
            return edit::SetContext{j.at("text").get<std::string>()};
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("malformed '" + op + "' edit: " + e.what());
    }
    throw SchemaError("unknown edit op '" + op + "'");
}

std::string describe(const GraphEdit& e) {
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, edit::AddNodes>)
                return fmt::format("add {} {}", x.count, x.count == 1 ? x.category : pluralize(x.category));
            else if constexpr (std::is_same_v<T, edit::RemoveNodes>)
                return fmt::format("remove {}", fmt::join(x.ids, ", "));
            else if constexpr (std::is_same_v<T, edit::Separate>)
                return fmt::format("separate {} and {} to {}px", x.id_a, x.id_b, x.min_separation);
            else if constexpr (std::is_same_v<T, edit::MoveNode>)
                return fmt::format("move {} to [{}, {}]", x.id, x.pos.x, x.pos.y);
            else if constexpr (std::is_same_v<T, edit::JitterSpacing>)
                return fmt::format("vary spacing ({}-{}px) and angles ({} to +{} deg)", x.spacing_min, x.spacing_max,
                                   x.angle_min, x.angle_max);
            else
                return "set context to \"" + x.text + "\"";
        },
        e);
}

} // namespace countloop
