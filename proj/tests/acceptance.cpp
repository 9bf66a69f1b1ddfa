// SPDX-License-Identifier: Apache-2.0
// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include "countloop/bench.hpp"
#include "countloop/compose.hpp"
#include "countloop/critic.hpp"
#include "countloop/orchestrator.hpp"
#include "support.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>

using namespace countloop;
using namespace countloop::testing;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void fail(std::string why) {
        if (pass)
            detail = std::move(why);
        pass = false;
    }
};

// --- composite score -----------------------------------------------------------

Outcome composite_exactness() {
    Outcome o;
    DetectionReport det;
    det.counts = {{"cup", 28}};
    auto s = composite_score(det, {{"cup", 30}}, 0.8, 0.6, 0.4);
    double err = std::abs(s.composite - 0.88);
    if (err > 1e-12)
        o.fail(fmt::format("S = {:.17g}, |S - 0.88| = {:.3g}", s.composite, err));
    det.counts = {{"cup", 30}};
    if (composite_score(det, {{"cup", 30}}, 0.3).count_term != 1.0)
        o.fail("exact count did not give count_term 1");
    det.counts = {};
    if (composite_score(det, {{"cup", 30}}, 0.3).count_term != 0.0)
        o.fail("zero detections did not give count_term 0");
    det.counts = {{"cup", 0}};
    if (composite_score(det, {{"cup", 30}}, 0.3).count_term != 0.0)
        o.fail("explicit zero count did not give count_term 0");
    if (o.pass)
        o.detail = fmt::format("S = {:.17g}", s.composite);
    return o;
}

// --- attention expansion -------------------------------------------------------

TokenMatrix random_tokens(Rng& rng, int rows, int d) {
    TokenMatrix m(rows, d);
    for (auto& v : m.values)
        v = rng.uniform(-4.0, 4.0);
    return m;
}

Outcome attention_expansion() {
    Outcome o;
    Rng rng(2024);
    double worst_sum = 0.0;
    for (int t = 0; t < 100 && o.pass; ++t) {
        int n = rng.between(1, 8), d = rng.between(1, 16), keys = rng.between(1, 32);
        auto k = random_tokens(rng, keys, d);
        auto v = random_tokens(rng, keys, rng.between(1, 16));
        std::vector<TokenMatrix> queries;
        for (int i = 0; i < n; ++i)
            queries.push_back(random_tokens(rng, rng.between(1, 32), d));
        auto expanded = expanded_attention(queries, k, v);
        if (expanded.size() != queries.size()) {
            o.fail(fmt::format("instance {}: {} blocks for {} queries", t, expanded.size(), queries.size()));
            break;
        }
        for (int i = 0; i < n; ++i) {
            const auto& q = queries[static_cast<std::size_t>(i)];
            auto single = attention(q, k, v);
            if (!(single == expanded[static_cast<std::size_t>(i)])) {
                o.fail(fmt::format("instance {}, query {}: expanded block differs from per-query attention", t, i));
                break;
            }
            auto w = attention_weights(q, k);
            for (int r = 0; r < w.rows; ++r) {
                double sum = 0.0;
                for (int c = 0; c < w.depth; ++c)
                    sum += w.at(r, c);
                worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
            }
        }
    }
    if (worst_sum > 1e-9)
        o.fail(fmt::format("softmax row sum off by {:.3g}", worst_sum));
    if (o.pass)
        o.detail = fmt::format("100 instances bit-identical, max |row sum - 1| = {:.3g}", worst_sum);
    return o;
}

// --- composition ---------------------------------------------------------------

std::vector<CompositionItem> items_for(Rng& rng, const Layout& l, int depth) {
    auto boxes = l.boxes;
    std::sort(boxes.begin(), boxes.end(), [](const InstanceBox& a, const InstanceBox& b) { return a.z < b.z; });
    std::vector<CompositionItem> items;
    for (const auto& b : boxes) {
        FeatureMap patch(b.bbox.height(), b.bbox.width(), depth);
        for (auto& v : patch.values)
            v = static_cast<float>(rng.uniform(-1.0, 1.0));
        items.push_back({b.bbox, std::move(patch)});
    }
    return items;
}

// Evaluates each prefix pixel by pixel: the value is the patch of the last
// item (in paste order) covering the pixel, zero when none does.
bool matches_oracle(const std::vector<CompositionItem>& items, const std::vector<FeatureMap>& prefixes, int h, int w,
                    int d) {
    if (prefixes.size() != items.size())
        return false;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& f = prefixes[i];
        if (f.height != h || f.width != w || f.depth != d)
            return false;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const CompositionItem* top = nullptr;
                for (std::size_t k = 0; k <= i; ++k) {
                    const auto& r = items[k].box;
                    if (x >= r.x0 && x < r.x1 && y >= r.y0 && y < r.y1)
                        top = &items[k];
                }
                for (int c = 0; c < d; ++c) {
                    float expect = top ? top->patch.at(y - top->box.y0, x - top->box.x0, c) : 0.0f;
                    if (f.at(y, x, c) != expect)
                        return false;
                }
            }
    }
    return true;
}

Outcome composition_oracle() {
    Outcome o;
    Rng rng(77);
    constexpr int kCanvas = 48;
    for (int t = 0; t < 200 && o.pass; ++t) {
        int d = rng.between(1, 4);
        auto l = random_layout(rng, rng.between(1, 30), kCanvas, 1, 20, {"a", "b", "c"});
        auto items = items_for(rng, l, d);
        if (!matches_oracle(items, cumulative_compose(items, kCanvas, kCanvas, d), kCanvas, kCanvas, d)) {
            o.fail(fmt::format("layout {} ({} boxes): prefix differs from the oracle", t, items.size()));
            break;
        }
        auto disjoint = random_disjoint_layout(rng, rng.between(1, 30), kCanvas, 1, 10, 0.0, {"a"});
        auto ditems = items_for(rng, disjoint, d);
        auto reference = cumulative_compose(ditems, kCanvas, kCanvas, d).back();
        for (int p = 0; p < 20; ++p) {
            auto shuffled = ditems;
            for (std::size_t i = shuffled.size(); i > 1; --i)
                std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
            if (!(cumulative_compose(shuffled, kCanvas, kCanvas, d).back() == reference)) {
                o.fail(fmt::format("layout {}: disjoint composition depends on paste order", t));
                break;
            }
        }
    }
    if (o.pass)
        o.detail = "200 layouts exact, 20 permutations each order-independent";
    return o;
}

Outcome mask_locality() {
    Outcome o;
    Rng rng(5150);
    long long checked = 0;
    for (int t = 0; t < 500 && o.pass; ++t) {
        int h = rng.between(1, 24), w = rng.between(1, 24), d = rng.between(1, 6);
        FeatureMap a(h, w, d);
        for (auto& v : a.values)
            v = static_cast<float>(rng.uniform(-10.0, 10.0));
        BinaryMask m(h, w);
        if (t % 2 == 0) {
            for (auto& b : m.bits)
                b = static_cast<std::uint8_t>(rng.below(2));
        } else {
            int x0 = rng.between(0, w - 1), y0 = rng.between(0, h - 1);
            m = box_mask({x0, y0, rng.between(x0 + 1, w), rng.between(y0 + 1, h)}, h, w);
        }
        auto out = mask_attention(a, m);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < d; ++c) {
                    ++checked;
                    float got = out.at(y, x, c);
                    bool ok = m.at(y, x) ? got == a.at(y, x, c) : (got == 0.0f && !std::signbit(got));
                    if (!ok) {
                        o.fail(fmt::format("pair {}: value at ({}, {}, {}) breaks locality", t, y, x, c));
                        y = h;
                        x = w;
                        break;
                    }
                }
    }
    if (o.pass)
        o.detail = fmt::format("500 pairs, {} values", checked);
    return o;
}

// --- closed loop -----------------------------------------------------------------

Outcome closed_loop_convergence() {
    Outcome o;
    std::vector<BenchPrompt> prompts;
    const int counts[] = {10, 50, 100};
    for (int c = 0; c < 3; ++c) {
        auto suite = gen_suite(SuiteKind::S, bundled_categories(), counts[c], counts[c], c == 0 ? 34 : 33,
                               100 + static_cast<std::uint64_t>(c));
        prompts.insert(prompts.end(), suite.prompts.begin(), suite.prompts.end());
    }
    SimConfig sim;
    sim.merge_iou = 0.10;
    sim.drop_prob = 0.0;
    auto start = std::chrono::steady_clock::now();
    int converged = 0, max_iters = 0;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        RunConfig cfg;
        cfg.seed = 42 + i;
        auto r = run(prompts[i].prompt, cfg, make_sim_backends(sim));
        max_iters = std::max(max_iters, static_cast<int>(r.iterations.size()));
        bool ok = r.converged && r.iterations.size() <= 5 &&
                  r.accepted_iteration().detection.counts == prompts[i].targets &&
                  r.accepted_iteration().score->composite > 0.85;
        if (ok)
            ++converged;
        else
            o.fail(fmt::format("prompt {} '{}' did not converge within 5 iterations", i, prompts[i].prompt));
    }
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (seconds >= 60.0)
        o.fail(fmt::format("took {:.1f}s", seconds));
    o.detail = fmt::format("{}/{} converged, max {} iterations, {:.1f}s{}", converged, prompts.size(), max_iters, seconds,
                           o.pass ? "" : "; " + o.detail);
    return o;
}

Outcome refinement_monotonicity() {
    Outcome o;
    const std::vector<std::string> categories = bundled_categories();
    int deficit_trials = 0, overlap_trials = 0, multi_iteration = 0;
    for (int t = 0; t < 100 && o.pass; ++t) {
        Rng rng(9000 + static_cast<std::uint64_t>(t));
        const auto& category = categories[rng.below(categories.size())];
        int target = rng.between(8, 80);
        PromptSpec spec;
        spec.targets[category] = target;
        spec.raw = fmt::format("{} {}", target, category);
        RunConfig cfg;
        cfg.seed = 500 + static_cast<std::uint64_t>(t);
        PlanningGraph graph;
        if (t % 2 == 0) {
            // Pure deficit: the plan is missing some of the requested instances.
            graph = build_graph(spec, cfg.seed);
            edit::RemoveNodes missing;
            int deficit = rng.between(1, std::max(1, target / 3));
            for (int k = 0; k < deficit; ++k)
                missing.ids.push_back(make_node_id(category, target - k));
            graph = apply_edits(graph, std::vector<GraphEdit>{missing});
            ++deficit_trials;
        } else {
            // Pure overlap: exact counts, some nodes stacked onto others, and
            // no up-front relaxation so the critic has to separate them.
            graph = build_graph(spec, cfg.seed);
            int stacks = rng.between(1, std::max(1, target / 4));
            for (int s = 0; s < stacks; ++s) {
                auto a = rng.below(graph.objects.size()), b = rng.below(graph.objects.size());
                if (a != b)
                    graph.objects[b].pos = graph.objects[a].pos;
            }
            graph.relations.clear();
            cfg.relax_steps = 0;
            ++overlap_trials;
        }
        auto r = run_from_graph(spec.raw, spec, graph, cfg, make_sim_backends());
        if (r.iterations.size() > 1)
            ++multi_iteration;
        for (std::size_t k = 1; k < r.iterations.size(); ++k) {
            const auto& prev = r.iterations[k - 1];
            const auto& cur = r.iterations[k];
            if (cur.residual_pairs > prev.residual_pairs) {
                o.fail(fmt::format("trial {} ({}): close pairs rose {} -> {} at iteration {}", t,
                                   t % 2 ? "overlap" : "deficit", prev.residual_pairs, cur.residual_pairs, k));
                break;
            }
            auto overlapping = [](const Layout& l) { return close_pairs(l, 0.0).size(); };
            if (overlapping(cur.layout) > overlapping(prev.layout)) {
                o.fail(fmt::format("trial {}: intersecting pairs rose at iteration {}", t, k));
                break;
            }
            if (cur.detection.total() < prev.detection.total()) {
                o.fail(fmt::format("trial {} ({}): detected total fell {} -> {} at iteration {}", t,
                                   t % 2 ? "overlap" : "deficit", prev.detection.total(), cur.detection.total(), k));
                break;
            }
        }
    }
    if (o.pass)
        o.detail = fmt::format("{} deficit + {} overlap trials, {} refined at least once", deficit_trials, overlap_trials,
                               multi_iteration);
    return o;
}

// --- metrics -------------------------------------------------------------------

Outcome metric_correctness() {
    Outcome o;
    auto a = count_f1({{"cup", 30}}, {{"cup", 30}});
    auto b = count_f1({{"cup", 28}}, {{"cup", 30}});
    auto c = count_f1({{"cat", 2}, {"dog", 0}}, {{"cat", 2}, {"dog", 3}});
    if (a.f1 != 1.0 || !a.exact)
        o.fail(fmt::format("identity case F1 = {:.17g}", a.f1));
    if (b.f1 != 28.0 / 29.0 || b.exact)
        o.fail(fmt::format("28 vs 30 F1 = {:.17g}", b.f1));
    if (c.f1 != 4.0 / 7.0 || c.exact)
        o.fail(fmt::format("cat/dog F1 = {:.17g}", c.f1));

    TempDir dir("accept_bench");
    auto suite = gen_suite(SuiteKind::M, bundled_categories(), 5, 40, 12, 8);
    SimConfig noisy;
    noisy.drop_prob = 0.15;
    noisy.noise_seed = 3;
    BenchOptions opts;
    opts.out_dir = dir.path();
    opts.parallelism = 3;
    RunConfig cfg;
    cfg.max_iter = 2;
    auto summary = run_bench(suite, cfg, [&] { return make_sim_backends(noisy); }, opts);
    auto again = recompute_metrics(dir.path());
    auto stored = read_json(dir.path() / "summary.json")["metrics"].get<BenchMetrics>();
    if (!(again == summary.metrics) || !(stored == summary.metrics))
        o.fail(fmt::format("recomputed F1 {:.17g} / accuracy {:.17g} vs summary {:.17g} / {:.17g}", again.f1,
                           again.accuracy, summary.metrics.f1, summary.metrics.accuracy));
    if (o.pass)
        o.detail = fmt::format("1, 28/29, 4/7 exact; recomputed bench F1 {:.6f}, accuracy {:.3f}", again.f1,
                               again.accuracy);
    return o;
}

// --- determinism ---------------------------------------------------------------

bool same_run_files(const std::filesystem::path& a, const std::filesystem::path& b, const RunReport& r,
                    std::string& why) {
    if (read_file(a / "run.json") != read_file(b / "run.json")) {
        why = "run.json differs";
        return false;
    }
    for (const auto& it : r.iterations) {
        auto png_a = read_file(a / it.image);
        if (png_a.empty() || png_a != read_file(b / it.image)) {
            why = it.image + " differs";
            return false;
        }
    }
    return true;
}

Outcome determinism() {
    Outcome o;
    struct Case {
        std::string prompt;
        SimConfig sim;
    };
    SimConfig noisy;
    noisy.drop_prob = 0.2;
    noisy.noise_seed = 11;
    std::vector<Case> cases{{"50 oranges in a bowl", {}}, {"A photo of 30 people and 20 cars in a city street", noisy}};
    std::size_t images = 0;
    for (const auto& c : cases) {
        TempDir a("accept_det_a"), b("accept_det_b");
        RunConfig cfg;
        cfg.seed = 42;
        RunOptions oa, ob;
        oa.out_dir = a.path();
        ob.out_dir = b.path();
        auto ra = run(c.prompt, cfg, make_sim_backends(c.sim), oa);
        run(c.prompt, cfg, make_sim_backends(c.sim), ob);
        std::string why;
        if (!same_run_files(a.path(), b.path(), ra, why)) {
            o.fail(c.prompt + ": " + why);
            break;
        }
        images += ra.iterations.size();
    }
    if (o.pass)
        o.detail = fmt::format("{} prompts, run.json and {} PNGs byte-identical", cases.size(), images);
    return o;
}

// --- schema fidelity -------------------------------------------------------------

Outcome schema_fidelity() {
    Outcome o;
    auto raw_graph = read_json(fixture("planning_graph_cats_bird.json"));
    auto g = raw_graph.get<PlanningGraph>();
    nlohmann::json encoded = g;
    if (!(encoded.get<PlanningGraph>() == g))
        o.fail("planning graph changed across encode/decode");
    if (g.objects.size() != raw_graph["objects"].size() || g.relations.size() != raw_graph["relations"].size())
        o.fail("planning graph lost nodes or edges");
    for (std::size_t i = 0; i < g.objects.size() && o.pass; ++i) {
        const auto& src = raw_graph["objects"][i];
        const auto& out = encoded["objects"][i];
        if (out["pos"] != src["pos"] || out["d"] != src["d"] || out["size"] != src["size"])
            o.fail("object " + g.objects[i].id + " fields changed");
        if (split_node_id(src["id"].get<std::string>()) != split_node_id(out["id"].get<std::string>()))
            o.fail("object id " + src["id"].get<std::string>() + " changed identity");
    }
    for (std::size_t i = 0; i < g.relations.size() && o.pass; ++i) {
        const auto& src = raw_graph["relations"][i];
        const auto& out = encoded["relations"][i];
        if (out["relation"] != src["relation"] || out["dist"] != src["dist"] || out["angle"] != src["angle"])
            o.fail(fmt::format("relation {} fields changed", i));
    }
    if (encoded["context"] != raw_graph["context"])
        o.fail("context changed");

    auto raw_critic = read_json(fixture("critic_watches.json"));
    auto report = parse_critic_json(raw_critic.dump());
    if (nlohmann::json(report) != raw_critic)
        o.fail("critic JSON did not re-encode to the same document");
    if (!(parse_critic_json(nlohmann::json(report).dump()) == report))
        o.fail("critic report changed across encode/decode");
    if (report.count_accuracy.detected.at("") != 12 || report.count_accuracy.target.at("") != 15 ||
        report.spatial_quality != 0.6 || !report.decision.continue_refinement)
        o.fail("critic fields misread");
    if (o.pass)
        o.detail = "planning graph and critic report round-trip";
    return o;
}

} // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<Outcome()> check;
    };
    const Criterion criteria[] = {
        {"composite score exactness", composite_exactness},
        {"attention expansion equivalence", attention_expansion},
        {"composition oracle", composition_oracle},
        {"mask locality", mask_locality},
        {"closed-loop convergence", closed_loop_convergence},
        {"refinement monotonicity", refinement_monotonicity},
        {"metric correctness", metric_correctness},
        {"determinism", determinism},
        {"schema fidelity", schema_fidelity},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o.fail(std::string("exception: ") + e.what());
        }
        failures += o.pass ? 0 : 1;
        fmt::print("{}  {:<34} {}\n", o.pass ? "PASS" : "FAIL", c.name, o.detail);
        std::fflush(stdout);
    }
    fmt::print("{} of {} criteria passed\n", std::size(criteria) - static_cast<std::size_t>(failures), std::size(criteria));
    return failures == 0 ? 0 : 1;
}
