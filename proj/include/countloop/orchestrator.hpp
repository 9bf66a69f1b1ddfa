// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "countloop/backends.hpp"
#include "countloop/critic.hpp"
#include "countloop/graph.hpp"
#include "countloop/layout.hpp"
#include "countloop/prompt.hpp"
#include "countloop/scoring.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace countloop {

struct RunConfig {
    double alpha = kDefaultAlpha;
    double beta = kDefaultBeta;
    double threshold = kDefaultThreshold;
    bool inclusive_threshold = false;  // S >= threshold instead of S > threshold
    int max_iter = 5;
    std::uint64_t seed = 42;
    int resolution = 1024;
    double detector_confidence = kDefaultConfidence;
    double min_sep = 8.0;
    int relax_steps = 200;
    int steps = 50;  // denoising steps forwarded to the generator

    /// Throws ConfigError.
    void validate() const;
    bool operator==(const RunConfig&) const = default;
};

enum class PlannerMode { Rule, Llm };
enum class CriticMode { Programmatic, Llm };

struct RunOptions {
    PlannerMode planner = PlannerMode::Rule;
    CriticMode critic = CriticMode::Programmatic;
    std::optional<std::filesystem::path> out_dir;  // persist run.json, trajectory.jsonl, iter_<k>.png
    bool write_images = true;
};

struct IterationRecord {
    int index = 0;
    PlanningGraph graph;       // the graph this iteration rendered (positions synced to the layout)
    Layout layout;
    int residual_pairs = 0;    // close pairs left after relaxation
    DetectionReport detection;
    std::optional<double> aesthetic;
    std::optional<ScoreBreakdown> score;  // absent when no aesthetic score was produced
    bool terminated = false;
    std::optional<CriticReport> critic;
    std::vector<GraphEdit> edits;
    std::vector<std::string> notes;
    std::string image;         // file name relative to the run directory
};

struct RunReport {
    RunConfig config;
    std::string prompt;
    PromptSpec spec;
    std::vector<IterationRecord> iterations;
    int accepted = -1;         // best-S iterate
    int last = -1;
    bool converged = false;
    std::optional<std::string> error;  // set when a backend failure aborted the run

    const IterationRecord& accepted_iteration() const { return iterations.at(static_cast<std::size_t>(accepted)); }
};

/// Parse, plan once, then loop: realize + relax, generate, detect, score,
/// terminate or critique and edit the graph. Backend failures abort with a
/// partial report (error set); CapacityError propagates.
RunReport run(const std::string& prompt, const RunConfig& config, const BackendSet& backends, const RunOptions& options = {});

/// Same loop from an explicit starting graph (fault injection, resumed runs).
RunReport run_from_graph(const std::string& prompt, const PromptSpec& spec, PlanningGraph graph, const RunConfig& config,
                         const BackendSet& backends, const RunOptions& options = {});

/// run.json, trajectory.jsonl and (when images are kept) iter_<k>.png.
void persist(const RunReport& report, const std::filesystem::path& dir, const std::vector<Image>& images);

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);
void to_json(nlohmann::json& j, const IterationRecord& r);
void from_json(const nlohmann::json& j, IterationRecord& r);
void to_json(nlohmann::json& j, const RunReport& r);
void from_json(const nlohmann::json& j, RunReport& r);

} // namespace countloop
