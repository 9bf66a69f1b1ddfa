// SPDX-License-Identifier: Apache-2.0
// countloop: single runs and benchmark suites from the command line.
#include "countloop/bench.hpp"
#include "countloop/error.hpp"
#include "countloop/llm.hpp"
#include "countloop/orchestrator.hpp"
#include "countloop/remote.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdlib>
#include <iostream>
#include <sstream>

using namespace countloop;

namespace {

struct Common {
    std::string planner = "rule";
    std::string critic = "programmatic";
    std::string backend = "sim";
    std::string remote_url;
    std::string llm_url;
    std::string llm_model = "gpt-4o";
    RunConfig config;
};

void add_common(CLI::App& cmd, Common& c) {
    cmd.add_option("--planner", c.planner, "Layout planner")->check(CLI::IsMember({"rule", "llm"}));
    cmd.add_option("--critic", c.critic, "Design critic")->check(CLI::IsMember({"programmatic", "llm"}));
    cmd.add_option("--backend", c.backend, "Generator/detector backend")->check(CLI::IsMember({"sim", "remote"}));
    cmd.add_option("--remote-url", c.remote_url, "Model bridge URL (remote backend)");
    cmd.add_option("--llm-url", c.llm_url, "Chat-completions endpoint");
    cmd.add_option("--llm-model", c.llm_model, "Chat model name");
    cmd.add_option("--max-iter", c.config.max_iter, "Refinement iteration bound")->check(CLI::PositiveNumber);
    cmd.add_option("--threshold", c.config.threshold, "Composite score threshold");
    cmd.add_flag("--inclusive", c.config.inclusive_threshold, "Terminate on S >= threshold instead of S > threshold");
    cmd.add_option("--alpha", c.config.alpha, "Count-accuracy weight");
    cmd.add_option("--beta", c.config.beta, "Aesthetic weight");
    cmd.add_option("--seed", c.config.seed, "Random seed");
    cmd.add_option("--res", c.config.resolution, "Canvas resolution in pixels");
    cmd.add_option("--confidence", c.config.detector_confidence, "Detector confidence threshold");
    cmd.add_option("--min-sep", c.config.min_sep, "Minimum gap between boxes in pixels");
}

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

BackendFactory make_factory(const Common& c) {
    const auto bridge = env_or("COUNTLOOP_BRIDGE_URL", c.remote_url);
    const auto llm_url = env_or("COUNTLOOP_LLM_URL", c.llm_url);
    const auto llm_key = env_or("COUNTLOOP_LLM_KEY", "");
    const bool wants_llm = c.planner == "llm" || c.critic == "llm";
    if (c.backend == "remote" && bridge.empty())
        throw ConfigError("--backend remote needs --remote-url or COUNTLOOP_BRIDGE_URL");
    if (wants_llm && llm_url.empty())
        throw ConfigError("the LLM planner/critic needs --llm-url or COUNTLOOP_LLM_URL");
    std::optional<Endpoint> bridge_ep, llm_ep;
    if (c.backend == "remote")
        bridge_ep = Endpoint::parse(bridge);
    if (wants_llm)
        llm_ep = Endpoint::parse(llm_url);
    const auto model = c.llm_model;
    return [=] {
        BackendSet set = make_sim_backends();
        if (bridge_ep) {
            set.generator = std::make_shared<RemoteGenerator>(*bridge_ep);
            set.detector = std::make_shared<RemoteDetector>(*bridge_ep);
        }
        if (llm_ep) {
            ChatParams params;
            params.model = model;
            params.api_key = llm_key;
            set.llm = std::make_shared<HttpChatClient>(*llm_ep, params);
        }
        return set;
    };
}

RunOptions run_options(const Common& c) {
    RunOptions o;
    o.planner = c.planner == "llm" ? PlannerMode::Llm : PlannerMode::Rule;
    o.critic = c.critic == "llm" ? CriticMode::Llm : CriticMode::Programmatic;
    return o;
}

void print_run(const RunReport& r) {
    for (const auto& it : r.iterations) {
        std::string counts;
        for (const auto& [c, n] : it.detection.counts)
            counts += fmt::format("{}{}={}/{}", counts.empty() ? "" : " ", c, n, r.spec.targets.count(c) ? r.spec.targets.at(c) : 0);
        fmt::print("iter {}  {}  S={}  residual_pairs={}  edits={}{}\n", it.index, counts,
                   it.score ? fmt::format("{:.4f}", it.score->composite) : std::string("n/a"), it.residual_pairs,
                   it.edits.size(), it.terminated ? "  [terminated]" : "");
        for (const auto& note : it.notes)
            fmt::print("  note: {}\n", note);
    }
    if (r.error)
        fmt::print("aborted: {}\n", *r.error);
    fmt::print("converged={} accepted=iter {} of {}\n", r.converged, r.accepted, r.iterations.size());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Count-accurate layout planning with iterative critic feedback"};
    app.require_subcommand(1);

    Common run_args;
    std::string prompt, out_dir;
    bool json_out = false;
    auto* run_cmd = app.add_subcommand("run", "Run the refinement loop for one prompt");
    run_cmd->add_option("--prompt", prompt, "Prompt text")->required();
    run_cmd->add_option("--out", out_dir, "Directory for run.json, trajectory.jsonl and images");
    run_cmd->add_flag("--json", json_out, "Print the full run report as JSON");
    add_common(*run_cmd, run_args);

    auto* bench_cmd = app.add_subcommand("bench", "Generate or run benchmark suites");
    bench_cmd->require_subcommand(1);

    std::string kind = "S", suite_out, categories_csv;
    int count_min = 30, count_max = 200, n_prompts = 200;
    std::uint64_t suite_seed = 42;
    auto* gen_cmd = bench_cmd->add_subcommand("gen", "Write a suite file (JSONL)");
    gen_cmd->add_option("--kind", kind, "S (single category) or M (2-3 categories)")->check(CLI::IsMember({"S", "M"}));
    gen_cmd->add_option("--categories", categories_csv, "Comma-separated categories (default: bundled list)");
    gen_cmd->add_option("--count-min", count_min, "Smallest instance count");
    gen_cmd->add_option("--count-max", count_max, "Largest instance count");
    gen_cmd->add_option("-n,--prompts", n_prompts, "Number of prompts");
    gen_cmd->add_option("--seed", suite_seed, "Suite seed");
    gen_cmd->add_option("--out", suite_out, "Suite file")->required();

    Common bench_args;
    std::string suite_file, bench_out = "bench_out";
    int parallelism = 1;
    auto* brun_cmd = bench_cmd->add_subcommand("run", "Run every prompt of a suite");
    brun_cmd->add_option("--suite", suite_file, "Suite file")->required();
    brun_cmd->add_option("--out", bench_out, "Output directory");
    brun_cmd->add_option("-j,--parallelism", parallelism, "Concurrent runs")->check(CLI::PositiveNumber);
    add_common(*brun_cmd, bench_args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            auto backends = make_factory(run_args)();
            auto opts = run_options(run_args);
            if (!out_dir.empty())
                opts.out_dir = out_dir;
            auto report = run(prompt, run_args.config, backends, opts);
            if (json_out)
                std::cout << nlohmann::json(report).dump(2) << '\n';
            else
                print_run(report);
            return report.error ? 2 : 0;
        }
        if (gen_cmd->parsed()) {
            std::vector<std::string> cats;
            if (categories_csv.empty()) {
                cats = bundled_categories();
            } else {
                std::stringstream ss(categories_csv);
                for (std::string item; std::getline(ss, item, ',');)
                    if (!item.empty())
                        cats.push_back(item);
            }
            auto suite = gen_suite(kind == "S" ? SuiteKind::S : SuiteKind::M, cats, count_min, count_max, n_prompts, suite_seed);
            save_suite(suite, suite_out);
            fmt::print("wrote {} prompts to {}\n", suite.prompts.size(), suite_out);
            return 0;
        }
        if (brun_cmd->parsed()) {
            auto suite = load_suite(suite_file);
            BenchOptions bopts;
            bopts.parallelism = parallelism;
            bopts.run = run_options(bench_args);
            bopts.out_dir = bench_out;
            auto summary = run_bench(suite, bench_args.config, make_factory(bench_args), bopts);
            std::cout << format_summary_table(summary);
            return summary.metrics.failures > 0 ? 2 : 0;
        }
    } catch (const Error& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    }
    return 0;
}
