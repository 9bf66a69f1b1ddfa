// SPDX-License-Identifier: Apache-2.0
#include "countloop/orchestrator.hpp"

#include "countloop/error.hpp"
#include "countloop/llm.hpp"
#include "countloop/rng.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>

namespace countloop {

namespace {

std::vector<std::string> target_categories(const PromptSpec& spec) {
    std::vector<std::string> out;
    for (const auto& [c, _] : spec.targets)
        out.push_back(c);
    return out;
}

CriticReport run_critic(const RunConfig& config, const RunOptions& options, const BackendSet& backends,
                        const std::string& prompt, const PromptSpec& spec, const IterationRecord& rec, int k,
                        std::vector<std::string>& notes) {
    CriticOptions copts;
    copts.min_sep = config.min_sep;
    copts.threshold = config.threshold;
    copts.inclusive_threshold = config.inclusive_threshold;
    copts.seed = mix_seed(config.seed, 0x1000u + static_cast<std::uint64_t>(k));
    const double aesthetic = rec.aesthetic.value_or(0.0);
    const double composite = rec.score ? rec.score->composite : 0.0;
    if (options.critic == CriticMode::Llm && backends.llm) {
        try {
            auto reply = backends.llm->chat(critic_messages(prompt, rec.layout, rec.detection, spec.targets, aesthetic, composite));
            return reconcile_with_detector(parse_critic_json(reply), rec.detection, spec.targets, rec.terminated);
        } catch (const Error& e) {
            notes.push_back(std::string("LLM critic unavailable, used programmatic critic: ") + e.what());
        }
    }
    return programmatic_critic(rec.layout, rec.detection, spec.targets, aesthetic, composite, copts);
}

RunReport loop(const std::string& prompt, const PromptSpec& spec, PlanningGraph graph, const RunConfig& config,
               const BackendSet& backends, const RunOptions& options, std::vector<std::string> pending_notes) {
    config.validate();
    if (!backends.generator || !backends.detector || !backends.aesthetic)
        throw ConfigError("backend set needs a generator, a detector and an aesthetic scorer");
    RunReport report;
    report.config = config;
    report.prompt = prompt;
    report.spec = spec;
    const auto categories = target_categories(spec);
    std::vector<Image> images;
    double best = -1.0;

    for (int k = 0; k < config.max_iter; ++k) {
        IterationRecord rec;
        rec.index = k;
        rec.notes = std::move(pending_notes);
        pending_notes.clear();

        auto relaxed = relax_overlaps(realize_layout(graph, config.resolution), config.min_sep, config.relax_steps);
        rec.layout = std::move(relaxed.layout);
        rec.residual_pairs = relaxed.residual_pairs;
        graph = sync_positions(graph, rec.layout);
        rec.graph = graph;

        GenerateResult generated;
        try {
            GenerateRequest request{rec.layout, prompt, graph.context, mix_seed(config.seed, static_cast<std::uint64_t>(k)),
                                    config.steps};
            generated = backends.generator->generate(request);
            rec.detection = backends.detector->detect(generated.image, generated.manifest ? &*generated.manifest : nullptr,
                                                      categories, config.detector_confidence);
            rec.aesthetic = backends.aesthetic->score(rec.layout, generated.image);
        } catch (const BackendError& e) {
            report.error = fmt::format("iteration {}: {}", k, e.what());
            break;
        }
        if (rec.aesthetic && !(*rec.aesthetic >= 0.0 && *rec.aesthetic <= 1.0)) {
            rec.notes.push_back(fmt::format("aesthetic score {} outside [0,1] discarded", *rec.aesthetic));
            rec.aesthetic.reset();
        }
        if (rec.aesthetic) {
            rec.score = composite_score(rec.detection, spec.targets, *rec.aesthetic, config.alpha, config.beta);
            rec.terminated = termination_check(rec.score->composite, rec.detection.counts, spec.targets, config.threshold,
                                               config.inclusive_threshold);
            if (rec.score->composite > best) {
                best = rec.score->composite;
                report.accepted = k;
            }
        } else {
            rec.notes.push_back("no aesthetic score; termination check skipped");
        }
        rec.image = fmt::format("iter_{}.png", k);
        images.push_back(std::move(generated.image));

        const bool final_round = rec.terminated || k + 1 == config.max_iter;
        if (!final_round) {
            auto critic = run_critic(config, options, backends, prompt, spec, rec, k, rec.notes);
            ImGradOptions gopts{config.resolution, config.min_sep, mix_seed(config.seed, 0x2000u + static_cast<std::uint64_t>(k))};
            auto grad = imgrad(graph, critic, gopts);
            rec.notes.insert(rec.notes.end(), grad.warnings.begin(), grad.warnings.end());
            try {
                graph = apply_edits(graph, grad.edits, {config.resolution, config.min_sep});
                rec.edits = std::move(grad.edits);
            } catch (const EditError& e) {
                rec.notes.push_back(std::string("edits rejected: ") + e.what());
            }
            rec.critic = std::move(critic);
        }
        report.converged = report.converged || rec.terminated;
        report.iterations.push_back(std::move(rec));
        if (report.converged)
            break;
    }

    report.last = static_cast<int>(report.iterations.size()) - 1;
    if (report.accepted < 0)
        report.accepted = report.last;
    if (options.out_dir) {
        if (!options.write_images)
            images.clear();
        persist(report, *options.out_dir, images);
    }
    return report;
}

} // namespace

void RunConfig::validate() const {
    if (alpha < 0 || beta < 0 || std::abs(alpha + beta - 1.0) > 1e-9)
        throw ConfigError(fmt::format("alpha + beta must be 1 (got {} + {})", alpha, beta));
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw ConfigError(fmt::format("threshold {} outside (0,1]", threshold));
    if (max_iter < 1)
        throw ConfigError("max_iter must be at least 1");
    if (resolution < 64)
        throw ConfigError("resolution must be at least 64");
    if (!(detector_confidence >= 0.0 && detector_confidence <= 1.0))
        throw ConfigError("detector confidence must lie in [0,1]");
    if (min_sep < 0 || relax_steps < 0 || steps < 1)
        throw ConfigError("min_sep and relax_steps must be non-negative and steps positive");
}

RunReport run(const std::string& prompt, const RunConfig& config, const BackendSet& backends, const RunOptions& options) {
    config.validate();
    auto spec = parse_prompt(prompt);
    PlacementPolicy policy;
    policy.resolution = config.resolution;
    policy.min_sep = config.min_sep;
    auto graph = build_graph(spec, config.seed, policy);
    std::vector<std::string> notes;
    if (options.planner == PlannerMode::Llm) {
        if (!backends.llm) {
            notes.push_back("no LLM attached; rule-based planner used");
        } else {
            try {
                std::string note;
                graph = llm_plan(*backends.llm, graph, prompt, &note);
                if (!note.empty())
                    notes.push_back(note);
            } catch (const BackendError& e) {
                notes.push_back(std::string("LLM planner unavailable, kept rule-based draft: ") + e.what());
            }
        }
    }
    return loop(prompt, spec, std::move(graph), config, backends, options, std::move(notes));
}

RunReport run_from_graph(const std::string& prompt, const PromptSpec& spec, PlanningGraph graph, const RunConfig& config,
                         const BackendSet& backends, const RunOptions& options) {
    return loop(prompt, spec, std::move(graph), config, backends, options, {});
}

void persist(const RunReport& report, const std::filesystem::path& dir, const std::vector<Image>& images) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "run.json", std::ios::binary);
        out << nlohmann::json(report).dump(2) << '\n';
        if (!out)
            throw Error("cannot write " + (dir / "run.json").string());
    }
    {
        std::ofstream out(dir / "trajectory.jsonl", std::ios::binary);
        for (const auto& rec : report.iterations)
            out << nlohmann::json(rec).dump() << '\n';
    }
    for (std::size_t k = 0; k < images.size() && k < report.iterations.size(); ++k)
        if (images[k].width > 0)
            write_png(dir / report.iterations[k].image, images[k]);
}

// --- JSON ---------------------------------------------------------------------

void to_json(nlohmann::json& j, const RunConfig& c) {
    j = nlohmann::json{{"alpha", c.alpha},
                       {"beta", c.beta},
                       {"threshold", c.threshold},
                       {"inclusive_threshold", c.inclusive_threshold},
                       {"max_iter", c.max_iter},
                       {"seed", c.seed},
                       {"resolution", c.resolution},
                       {"detector_confidence", c.detector_confidence},
                       {"min_sep", c.min_sep},
                       {"relax_steps", c.relax_steps},
                       {"steps", c.steps}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
    RunConfig d;
    c.alpha = j.value("alpha", d.alpha);
    c.beta = j.value("beta", d.beta);
    c.threshold = j.value("threshold", d.threshold);
    c.inclusive_threshold = j.value("inclusive_threshold", d.inclusive_threshold);
    c.max_iter = j.value("max_iter", d.max_iter);
    c.seed = j.value("seed", d.seed);
    c.resolution = j.value("resolution", d.resolution);
    c.detector_confidence = j.value("detector_confidence", d.detector_confidence);
    c.min_sep = j.value("min_sep", d.min_sep);
    c.relax_steps = j.value("relax_steps", d.relax_steps);
    c.steps = j.value("steps", d.steps);
}

void to_json(nlohmann::json& j, const IterationRecord& r) {
    auto edits = nlohmann::json::array();
    for (const auto& e : r.edits)
        edits.push_back(edit_to_json(e));
    j = nlohmann::json{{"index", r.index},
                       {"graph", r.graph},
                       {"layout", r.layout},
                       {"residual_pairs", r.residual_pairs},
                       {"detection", r.detection},
                       {"aesthetic", r.aesthetic ? nlohmann::json(*r.aesthetic) : nlohmann::json(nullptr)},
                       {"score", r.score ? nlohmann::json(*r.score) : nlohmann::json(nullptr)},
                       {"terminated", r.terminated},
                       {"critic", r.critic ? nlohmann::json(*r.critic) : nlohmann::json(nullptr)},
                       {"edits", edits},
                       {"notes", r.notes},
                       {"image", r.image}};
}

void from_json(const nlohmann::json& j, IterationRecord& r) {
    r = IterationRecord{};
    try {
        r.index = j.at("index").get<int>();
        r.graph = j.at("graph").get<PlanningGraph>();
        r.layout = j.at("layout").get<Layout>();
        r.residual_pairs = j.value("residual_pairs", 0);
        r.detection = j.at("detection").get<DetectionReport>();
        if (const auto& a = j.at("aesthetic"); !a.is_null())
            r.aesthetic = a.get<double>();
        if (const auto& s = j.at("score"); !s.is_null())
            r.score = s.get<ScoreBreakdown>();
        r.terminated = j.at("terminated").get<bool>();
        if (auto c = j.find("critic"); c != j.end() && !c->is_null())
            r.critic = c->get<CriticReport>();
        for (const auto& e : j.value("edits", nlohmann::json::array()))
            r.edits.push_back(edit_from_json(e));
        r.notes = j.value("notes", std::vector<std::string>{});
        r.image = j.value("image", std::string{});
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed iteration record: ") + e.what());
    }
}

void to_json(nlohmann::json& j, const RunReport& r) {
    j = nlohmann::json{{"config", r.config},
                       {"prompt", r.prompt},
                       {"spec", r.spec},
                       {"iterations", r.iterations},
                       {"accepted", r.accepted},
                       {"last", r.last},
                       {"converged", r.converged},
                       {"error", r.error ? nlohmann::json(*r.error) : nlohmann::json(nullptr)}};
}

void from_json(const nlohmann::json& j, RunReport& r) {
    r = RunReport{};
    try {
        r.config = j.at("config").get<RunConfig>();
        r.prompt = j.at("prompt").get<std::string>();
        r.spec = j.at("spec").get<PromptSpec>();
        r.iterations = j.at("iterations").get<std::vector<IterationRecord>>();
        r.accepted = j.at("accepted").get<int>();
        r.last = j.at("last").get<int>();
        r.converged = j.at("converged").get<bool>();
        if (auto e = j.find("error"); e != j.end() && !e->is_null())
            r.error = e->get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed run report: ") + e.what());
    }
}

} // namespace countloop
