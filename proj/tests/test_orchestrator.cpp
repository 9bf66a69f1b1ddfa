// SPDX-License-Identifier: Apache-2.0
#include "countloop/error.hpp"
#include "countloop/orchestrator.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>

using namespace countloop;
using namespace countloop::testing;

namespace {

// Loses half of every category regardless of the layout.
struct HalvingDetector : Detector {
    SimDetector inner;
    DetectionReport detect(const Image& image, const RenderManifest* manifest, std::span<const std::string> categories,
                           double confidence) override {
        auto r = inner.detect(image, manifest, categories, confidence);
        for (auto& [c, n] : r.counts)
            n /= 2;
        return r;
    }
};

struct FailingGenerator : ImageGenerator {
    SimGenerator inner;
    int calls = 0;
    int fail_at = 1;
    GenerateResult generate(const GenerateRequest& request) override {
        if (calls++ == fail_at)
            throw TransportError("bridge went away");
        return inner.generate(request);
    }
};

struct NoAesthetic : AestheticScorer {
    std::optional<double> score(const Layout&, const Image&) override { return std::nullopt; }
};

struct ScriptedChat : ChatClient {
    std::string reply;
    int calls = 0;
    std::string chat(std::span<const ChatMessage>) override {
        ++calls;
        if (reply.empty())
            throw TransportError("offline");
        return reply;
    }
};

} // namespace

TEST_CASE("fifty oranges converge") {
    auto r = run("50 oranges in a bowl", {}, make_sim_backends());
    CHECK(r.converged);
    CHECK_FALSE(r.error);
    CHECK(r.iterations.size() <= 5);
    CHECK(r.accepted_iteration().detection.counts == CountMap{{"orange", 50}});
    CHECK(r.accepted_iteration().terminated);
    CHECK(r.spec.targets == parse_prompt("50 oranges in a bowl").targets);
}

TEST_CASE("a perfect start stops after one iteration") {
    RunConfig cfg;
    cfg.max_iter = 1;
    auto r = run("two cats and a bird in the sky", cfg, make_sim_backends());
    CHECK(r.iterations.size() == 1);
    CHECK(r.converged);
    CHECK(r.accepted == 0);
    CHECK_FALSE(r.iterations[0].critic);
    CHECK(r.iterations[0].edits.empty());
}

TEST_CASE("an adversarial detector never converges; the best iterate is accepted") {
    auto backends = make_sim_backends();
    backends.detector = std::make_shared<HalvingDetector>();
    RunConfig cfg;
    cfg.max_iter = 4;
    auto r = run("20 cups on a table", cfg, backends);
    CHECK_FALSE(r.converged);
    CHECK(r.iterations.size() == 4);
    CHECK(r.last == 3);
    double best = -1;
    int arg = -1;
    for (const auto& it : r.iterations)
        if (it.score->composite > best) {
            best = it.score->composite;
            arg = it.index;
        }
    CHECK(r.accepted == arg);
    // The critic was consulted on every round but the last.
    CHECK(r.iterations[2].critic);
    CHECK_FALSE(r.iterations[3].critic);
}

TEST_CASE("trajectory integrity and target conservation") {
    auto backends = make_sim_backends();
    backends.detector = std::make_shared<HalvingDetector>();
    RunConfig cfg;
    cfg.max_iter = 3;
    auto r = run("12 apples and 5 pears on a plate", cfg, backends);
    REQUIRE(r.iterations.size() == 3);
    for (const auto& it : r.iterations) {
        REQUIRE(it.score);
        auto again = composite_score(it.detection, r.spec.targets, *it.aesthetic, cfg.alpha, cfg.beta);
        CHECK(again.composite == it.score->composite);
        CHECK(it.index == &it - r.iterations.data());
        CHECK(it.image == "iter_" + std::to_string(it.index) + ".png");
    }
    CHECK(r.spec.targets == CountMap{{"apple", 12}, {"pear", 5}});
}

TEST_CASE("pure-deficit starts add the missing nodes") {
    auto spec = parse_prompt("40 coins on a table");
    PromptSpec fewer = spec;
    fewer.targets["coin"] = 31;
    auto graph = build_graph(fewer, 5);
    auto r = run_from_graph("40 coins on a table", spec, graph, {}, make_sim_backends());
    CHECK(r.converged);
    REQUIRE(r.iterations.size() >= 2);
    CHECK(r.iterations[0].detection.total() == 31);
    CHECK(std::holds_alternative<edit::AddNodes>(r.iterations[0].edits.at(0)));
    for (std::size_t k = 1; k < r.iterations.size(); ++k)
        CHECK(r.iterations[k].detection.total() >= r.iterations[k - 1].detection.total());
    CHECK(r.accepted_iteration().detection.counts == spec.targets);
}

TEST_CASE("overlap faults are separated by the loop") {
    auto spec = parse_prompt("10 mugs");
    auto graph = build_graph(spec, 3);
    // Stack mug_2 onto mug_1 and mug_4 onto mug_3.
    graph.objects[1].pos = graph.objects[0].pos;
    graph.objects[3].pos = graph.objects[2].pos;
    RunConfig cfg;
    cfg.relax_steps = 0;  // leave the repair to the critic
    auto r = run_from_graph("10 mugs", spec, graph, cfg, make_sim_backends());
    CHECK(r.iterations[0].residual_pairs >= 2);
    CHECK(r.iterations[0].detection.total() < 10);
    CHECK(r.converged);
    CHECK(r.accepted_iteration().residual_pairs == 0);
}

TEST_CASE("backend failures abort with a partial report") {
    auto backends = make_sim_backends();
    auto gen = std::make_shared<FailingGenerator>();
    backends.generator = gen;
    backends.detector = std::make_shared<HalvingDetector>();
    auto r = run("8 cups", {}, backends);
    REQUIRE(r.error);
    CHECK(r.error->find("bridge went away") != std::string::npos);
    CHECK(r.iterations.size() == 1);
    CHECK(r.accepted == 0);
    CHECK_FALSE(r.converged);
}

TEST_CASE("missing aesthetic scores skip termination") {
    auto backends = make_sim_backends();
    backends.aesthetic = std::make_shared<NoAesthetic>();
    RunConfig cfg;
    cfg.max_iter = 2;
    auto r = run("6 cups", cfg, backends);
    CHECK(r.iterations.size() == 2);
    CHECK_FALSE(r.converged);
    CHECK_FALSE(r.iterations[0].score);
    CHECK_FALSE(r.iterations[0].notes.empty());
    CHECK(r.accepted == r.last);
}

TEST_CASE("configuration and capacity errors") {
    RunConfig cfg;
    cfg.alpha = 0.7;
    CHECK_THROWS_AS(run("3 cups", cfg, make_sim_backends()), ConfigError);
    cfg = {};
    cfg.max_iter = 0;
    CHECK_THROWS_AS(run("3 cups", cfg, make_sim_backends()), ConfigError);
    cfg = {};
    cfg.resolution = 32;
    CHECK_THROWS_AS(run("3 cups", cfg, make_sim_backends()), ConfigError);
    CHECK_THROWS_AS(run("90000 beads", {}, make_sim_backends()), CapacityError);
    CHECK_THROWS_AS(run("a crowd of people", {}, make_sim_backends()), ParseError);
    BackendSet empty;
    CHECK_THROWS_AS(run("3 cups", {}, empty), ConfigError);
}

TEST_CASE("LLM critic: detector counts win, failures fall back") {
    auto backends = make_sim_backends();
    backends.detector = std::make_shared<HalvingDetector>();
    auto chat = std::make_shared<ScriptedChat>();
    chat->reply = read_file(fixture("critic_watches.json"));
    backends.llm = chat;
    RunOptions opts;
    opts.critic = CriticMode::Llm;
    RunConfig cfg;
    cfg.max_iter = 2;
    auto r = run("10 cups", cfg, backends, opts);
    REQUIRE(r.iterations[0].critic);
    CHECK(chat->calls == 1);
    const auto& critic = *r.iterations[0].critic;
    CHECK(critic.count_accuracy.detected == CountMap{{"cup", 5}});
    CHECK(critic.count_accuracy.target == CountMap{{"cup", 10}});

    chat->reply.clear();
    auto fallback = run("10 cups", cfg, backends, opts);
    REQUIRE(fallback.iterations[0].critic);
    auto notes = fallback.iterations[0].notes;
    CHECK(std::any_of(notes.begin(), notes.end(), [](const std::string& n) { return n.find("programmatic") != std::string::npos; }));
}

TEST_CASE("LLM planner without an LLM keeps the rule planner") {
    RunOptions opts;
    opts.planner = PlannerMode::Llm;
    auto r = run("4 cups", {}, make_sim_backends(), opts);
    CHECK(r.converged);
    CHECK_FALSE(r.iterations[0].notes.empty());
}

TEST_CASE("persisted runs") {
    TempDir dir("run");
    RunOptions opts;
    opts.out_dir = dir.path();
    auto backends = make_sim_backends();
    backends.detector = std::make_shared<HalvingDetector>();
    RunConfig cfg;
    cfg.max_iter = 2;
    auto r = run("9 cups", cfg, backends, opts);
    CHECK(std::filesystem::exists(dir.path() / "run.json"));
    CHECK(std::filesystem::exists(dir.path() / "iter_0.png"));
    CHECK(std::filesystem::exists(dir.path() / "iter_1.png"));
    auto stored = read_json(dir.path() / "run.json");
    CHECK(stored == nlohmann::json(r));
    CHECK(nlohmann::json(stored.get<RunReport>()) == stored);

    auto lines = read_file(dir.path() / "trajectory.jsonl");
    CHECK(std::count(lines.begin(), lines.end(), '\n') == 2);

    auto png = read_file(dir.path() / "iter_0.png");
    std::vector<std::uint8_t> bytes(png.begin(), png.end());
    CHECK(decode_png(bytes).width == 1024);
}

TEST_CASE("identical runs persist identical bytes") {
    TempDir a("det_a"), b("det_b");
    RunOptions oa, ob;
    oa.out_dir = a.path();
    ob.out_dir = b.path();
    run("A photo of 30 buttons on a table", {}, make_sim_backends(), oa);
    run("A photo of 30 buttons on a table", {}, make_sim_backends(), ob);
    CHECK(read_file(a.path() / "run.json") == read_file(b.path() / "run.json"));
    CHECK(read_file(a.path() / "iter_0.png") == read_file(b.path() / "iter_0.png"));
}
