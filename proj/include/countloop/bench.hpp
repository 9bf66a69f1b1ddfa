// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "countloop/orchestrator.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace countloop {

enum class SuiteKind { S, M };

struct BenchPrompt {
    std::string prompt;
    CountMap targets;
    SuiteKind kind = SuiteKind::S;
    bool operator==(const BenchPrompt&) const = default;
};

struct SuiteProvenance {
    std::vector<std::string> categories;
    int count_min = 30;
    int count_max = 200;
    int n_prompts = 200;
    std::uint64_t seed = 42;
    bool operator==(const SuiteProvenance&) const = default;
};

struct BenchSuite {
    std::string name;
    SuiteKind kind = SuiteKind::S;
    std::vector<BenchPrompt> prompts;
    SuiteProvenance provenance;
    bool operator==(const BenchSuite&) const = default;
};

std::vector<std::string> bundled_categories();
std::vector<std::string> bundled_contexts();

/// S: one category per prompt; M: two or three distinct categories. Counts are
/// uniform in [count_min, count_max]; prompts read "A photo of <n> <plural>
/// <context>". Throws ConfigError on empty categories or a bad range.
BenchSuite gen_suite(SuiteKind kind, const std::vector<std::string>& categories, int count_min, int count_max,
                     int n_prompts, std::uint64_t seed);

/// JSONL, one {"prompt","targets","kind"} per line, plus <file>.meta.json with
/// the name and provenance.
void save_suite(const BenchSuite& suite, const std::filesystem::path& file);
/// Throws ConfigError when any prompt no longer parses to its stored targets.
BenchSuite load_suite(const std::filesystem::path& file);

struct RuntimeBucket {
    int lo = 0;
    int hi = 0;
    int runs = 0;
    double mean_seconds = 0.0;
    double std_seconds = 0.0;
};

struct BenchMetrics {
    int runs = 0;
    int failures = 0;
    double f1 = 0.0;
    double accuracy = 0.0;
    double mean_aesthetic = 0.0;
    double mean_iterations = 0.0;
    double mean_iterations_to_converge = 0.0;
    int converged = 0;
    bool operator==(const BenchMetrics&) const = default;
};

struct BenchSummary {
    std::string suite;
    BenchMetrics metrics;
    std::vector<RuntimeBucket> runtime;
};

struct BenchOptions {
    int parallelism = 1;
    RunOptions run;  // out_dir is ignored; each run persists under <out>/runs/<index>
    std::filesystem::path out_dir;
};

using BackendFactory = std::function<BackendSet()>;

/// Runs every prompt (run i uses seed = config.seed + i), writes per-run
/// reports, summary.json and summary.txt. Failed runs are counted and excluded.
/// Throws ConfigError on an empty suite.
BenchSummary run_bench(const BenchSuite& suite, const RunConfig& config, const BackendFactory& backends,
                       const BenchOptions& options);

/// Aggregates counting metrics from accepted iterates of finished runs.
BenchMetrics aggregate(const std::vector<RunReport>& reports, int failures);

/// Re-reads <dir>/runs/*/run.json and recomputes the metrics.
BenchMetrics recompute_metrics(const std::filesystem::path& bench_dir);

std::string format_summary_table(const BenchSummary& summary);

void to_json(nlohmann::json& j, const BenchMetrics& m);
void from_json(const nlohmann::json& j, BenchMetrics& m);
void to_json(nlohmann::json& j, const BenchSummary& s);

} // namespace countloop
