// SPDX-License-Identifier: Apache-2.0
#include "countloop/error.hpp"
#include "countloop/layout.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace countloop;
using namespace countloop::testing;

namespace {

// Independent gap oracle: the wider of the horizontal and vertical clearances.
double gap_oracle(const PixelRect& a, const PixelRect& b) {
    double gx = std::max(b.x0 - a.x1, a.x0 - b.x1);
    double gy = std::max(b.y0 - a.y1, a.y0 - b.y1);
    return std::max(gx, gy);
}

int close_pair_oracle(const Layout& l, double min_sep) {
    int n = 0;
    for (std::size_t i = 0; i < l.boxes.size(); ++i)
        for (std::size_t j = i + 1; j < l.boxes.size(); ++j)
            n += gap_oracle(l.boxes[i].bbox, l.boxes[j].bbox) < min_sep;
    return n;
}

bool on_canvas(const Layout& l) {
    return std::all_of(l.boxes.begin(), l.boxes.end(), [&](const InstanceBox& b) {
        return b.bbox.x0 >= 0 && b.bbox.y0 >= 0 && b.bbox.x1 < l.resolution && b.bbox.y1 < l.resolution &&
               b.bbox.x0 < b.bbox.x1 && b.bbox.y0 < b.bbox.y1;
    });
}

bool same_dims(const Layout& a, const Layout& b) {
    if (a.boxes.size() != b.boxes.size())
        return false;
    for (std::size_t i = 0; i < a.boxes.size(); ++i)
        if (a.boxes[i].id != b.boxes[i].id || a.boxes[i].category != b.boxes[i].category ||
            a.boxes[i].bbox.width() != b.boxes[i].bbox.width() || a.boxes[i].bbox.height() != b.boxes[i].bbox.height())
            return false;
    return true;
}

PlanningGraph single(Vec2 pos, Vec2 size) {
    PlanningGraph g;
    g.objects.push_back(ObjectNode{"cat_1", "cat", pos, 0.4, size, std::nullopt, {}});
    return g;
}

} // namespace

TEST_CASE("realize_layout rounds center and extent") {
    auto l = realize_layout(single({0.3, 0.6}, {0.2, 0.25}), 1024);
    REQUIRE(l.boxes.size() == 1);
    CHECK(l.boxes[0].bbox == PixelRect{205, 486, 409, 742});
    CHECK(l.boxes[0].bbox.center_x() == 307.0);
    CHECK(l.boxes[0].bbox.center_y() == 614.0);

    auto full = realize_layout(single({0.5, 0.5}, {1.0, 1.0}), 1024, LayoutLimits{1.0, 16});
    CHECK(full.boxes[0].bbox == PixelRect{0, 0, 1023, 1023});

    // Near the edge the box is shifted, not shrunk.
    auto edge = realize_layout(single({0.99, 0.01}, {0.1, 0.1}), 1024);
    CHECK(edge.boxes[0].bbox.width() == 102);
    CHECK(edge.boxes[0].bbox.x1 == 1023);
    CHECK(edge.boxes[0].bbox.y0 == 0);
}

TEST_CASE("example graph: bird box above both cats, paint order far to near") {
    auto g = read_json(fixture("planning_graph_cats_bird.json")).get<PlanningGraph>();
    auto l = realize_layout(g, 1024);
    REQUIRE(l.boxes.size() == 3);
    const auto& bird = l.boxes[2];
    CHECK(bird.bbox.center_y() < l.boxes[0].bbox.center_y());
    CHECK(bird.bbox.center_y() < l.boxes[1].bbox.center_y());
    // depth 0.4 (cats) is farther than 0.2 (bird): cats first, ties by id.
    CHECK(l.boxes[0].z == 0);
    CHECK(l.boxes[1].z == 1);
    CHECK(bird.z == 2);
    CHECK(l.category_counts() == g.category_counts());
}

TEST_CASE("realize_layout capacity and JSON") {
    PlanningGraph g;
    for (int i = 1; i <= 3; ++i)
        g.objects.push_back(ObjectNode{make_node_id("box", i), "box", {0.5, 0.5}, 0.5, {0.5, 0.5}, std::nullopt, {}});
    CHECK_THROWS_AS(realize_layout(g, 1024), CapacityError);

    auto l = lattice(2, 2, 40, 100);
    nlohmann::json j = l;
    CHECK(j["boxes"][0]["bbox"].size() == 4);
    CHECK(j.get<Layout>() == l);
    CHECK_THROWS_AS(R"({"resolution":64,"boxes":[{"id":"a_1","category":"a","bbox":[5,5,2,9],"depth":0.5,"z":0}]})"_json
                        .get<Layout>(),
                    SchemaError);
}

TEST_CASE("relax_overlaps separates coincident boxes") {
    Layout l;
    l.resolution = 1024;
    l.boxes = {make_box("cup", 1, {400, 400, 500, 500}), make_box("cup", 2, {400, 400, 500, 500})};
    assign_paint_order(l.boxes);
    auto r = relax_overlaps(l, 10.0, 200);
    CHECK(r.residual_pairs == 0);
    CHECK(gap_oracle(r.layout.boxes[0].bbox, r.layout.boxes[1].bbox) >= 10.0);
    CHECK(same_dims(l, r.layout));
    CHECK(on_canvas(r.layout));
}

TEST_CASE("relax_overlaps is the identity on feasible layouts") {
    auto l = lattice(4, 4, 50, 80);
    auto r = relax_overlaps(l, 8.0, 200);
    CHECK(r.layout == l);
    CHECK(r.steps == 0);
    CHECK(r.residual_pairs == 0);
}

TEST_CASE("relax_overlaps clears 50 random boxes under 40% coverage") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        auto l = random_layout(rng, 50, 1024, 60, 110, {"cup", "plate"});
        double area = 0;
        for (const auto& b : l.boxes)
            area += static_cast<double>(b.bbox.area());
        REQUIRE(area < 0.4 * 1024 * 1024);
        auto r = relax_overlaps(l, 8.0, 200);
        CHECK_MESSAGE(r.residual_pairs == 0, "seed " << seed);
        CHECK(close_pair_oracle(r.layout, 8.0) == r.residual_pairs);
        CHECK(same_dims(l, r.layout));
        CHECK(on_canvas(r.layout));
        CHECK(r.layout == relax_overlaps(l, 8.0, 200).layout);
    }
}

TEST_CASE("relax_overlaps reports residuals when the step budget runs out") {
    Rng rng(11);
    auto l = random_layout(rng, 40, 512, 60, 100, {"cup"});
    auto r = relax_overlaps(l, 8.0, 1);
    CHECK(r.residual_pairs == close_pair_oracle(r.layout, 8.0));
    CHECK(r.residual_pairs <= close_pair_oracle(l, 8.0));
    CHECK(same_dims(l, r.layout));
}

TEST_CASE("close_pairs matches the gap oracle") {
    Rng rng(5);
    for (int t = 0; t < 30; ++t) {
        auto l = random_layout(rng, 30, 512, 10, 80, {"a", "b"});
        for (double sep : {0.0, 8.0, 20.0})
            CHECK(static_cast<int>(close_pairs(l, sep).size()) == close_pair_oracle(l, sep));
    }
}

TEST_CASE("grid_score on lattices") {
    CHECK(grid_score(lattice(3, 3, 40, 100)) == 1.0);
    CHECK(grid_score(lattice(1, 3, 40, 100)) == 0.0);
    // +-15% of the pitch on each axis.
    CHECK(grid_score(jitter(lattice(4, 4, 40, 100), 1, 15.0, 0.0)) < 0.8);
    double sum = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed)
        sum += grid_score(jitter(lattice(3, 3, 40, 100), seed, 15.0, 0.0));
    CHECK(sum / 20 < 0.8);
}

TEST_CASE("grid_score invariances") {
    Rng rng(9);
    auto l = random_disjoint_layout(rng, 12, 1024, 30, 60, 8, {"a"});
    double s = grid_score(l);
    auto moved = l;
    for (auto& b : moved.boxes) {
        b.bbox.x0 += 7;
        b.bbox.x1 += 7;
        b.bbox.y0 -= 3;
        b.bbox.y1 -= 3;
    }
    CHECK(grid_score(moved) == doctest::Approx(s).epsilon(1e-12));
    auto shuffled = l;
    std::reverse(shuffled.boxes.begin(), shuffled.boxes.end());
    CHECK(grid_score(shuffled) == doctest::Approx(s).epsilon(1e-12));
}

TEST_CASE("jitter") {
    auto l = lattice(4, 4, 30, 46);
    CHECK(jitter(l, 3, 0.0, 0.0) == l);
    CHECK(jitter(l, 3, 46.0, 10.0) == jitter(l, 3, 46.0, 10.0));
    auto j = jitter(l, 3, 46.0, 10.0);
    CHECK(grid_score(j) < grid_score(l));
    CHECK(same_dims(l, j));
    CHECK(on_canvas(j));
}

TEST_CASE("paint order: depth descending, ties by natural id") {
    std::vector<InstanceBox> boxes{make_box("cup", 10, {0, 0, 5, 5}, 0.5), make_box("cup", 2, {0, 0, 5, 5}, 0.5),
                                   make_box("cup", 1, {0, 0, 5, 5}, 0.1), make_box("cup", 3, {0, 0, 5, 5}, 0.9)};
    assign_paint_order(boxes);
    CHECK(boxes[3].z == 0);
    CHECK(boxes[1].z == 1);
    CHECK(boxes[0].z == 2);
    CHECK(boxes[2].z == 3);
}

TEST_CASE("sync_positions writes box centers back") {
    auto g = read_json(fixture("planning_graph_cats_bird.json")).get<PlanningGraph>();
    auto l = realize_layout(g, 1024);
    l.boxes[0].bbox = {0, 0, 100, 100};
    auto s = sync_positions(g, l);
    CHECK(s.find("cat_1")->pos == Vec2{50.0 / 1024, 50.0 / 1024});
    // cat_1 is now above the bird, so its "below" edge goes.
    CHECK(s.relations.size() == 1);
    CHECK(validate_graph(s).empty());
}
