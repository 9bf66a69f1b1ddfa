// SPDX-License-Identifier: Apache-2.0
#include "countloop/bench.hpp"

#include "countloop/embedded_data.hpp"
#include "countloop/error.hpp"
#include "countloop/nouns.hpp"
#include "countloop/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

namespace countloop {

namespace {

std::string kind_name(SuiteKind k) { return k == SuiteKind::S ? "S" : "M"; }

SuiteKind kind_from(const std::string& s) {
    if (s == "S" || s == "s")
        return SuiteKind::S;
    if (s == "M" || s == "m")
        return SuiteKind::M;
    throw ConfigError("unknown suite kind '" + s + "'");
}

std::string counted(int n, const std::string& category) { return fmt::format("{} {}", n, n == 1 ? category : pluralize(category)); }

struct Bucket {
    int lo, hi;
};
constexpr Bucket kBuckets[] = {{1, 50}, {51, 100}, {101, 200}, {201, 1000000}};

struct RunOutcome {
    std::optional<RunReport> report;
    std::string error;
    double seconds = 0.0;
    int instances = 0;
};

} // namespace

std::vector<std::string> bundled_categories() {
    std::vector<std::string> out;
    for (auto line : data::lines(data::categories()))
        out.emplace_back(line);
    return out;
}

std::vector<std::string> bundled_contexts() {
    std::vector<std::string> out;
    for (auto line : data::lines(data::contexts()))
        out.emplace_back(line);
    return out;
}

BenchSuite gen_suite(SuiteKind kind, const std::vector<std::string>& categories, int count_min, int count_max,
                     int n_prompts, std::uint64_t seed) {
    if (categories.empty())
        throw ConfigError("suite generation needs at least one category");
    if (count_min < 1 || count_max < count_min)
        throw ConfigError(fmt::format("bad count range [{}, {}]", count_min, count_max));
    if (n_prompts < 0)
        throw ConfigError("prompt count must be non-negative");
    std::vector<std::string> pool = categories;
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
    if (kind == SuiteKind::M && pool.size() < 2)
        throw ConfigError("an M suite needs at least two distinct categories");
    const auto contexts = bundled_contexts();

    BenchSuite suite;
    suite.kind = kind;
    suite.name = fmt::format("{}-suite-seed{}", kind_name(kind), seed);
    suite.provenance = {pool, count_min, count_max, n_prompts, seed};
    Rng rng(seed);
    for (int p = 0; p < n_prompts; ++p) {
        int n_cats = kind == SuiteKind::S ? 1 : std::min<int>(rng.between(2, 3), static_cast<int>(pool.size()));
        // Partial Fisher-Yates for distinct categories.
        auto order = pool;
        for (int i = 0; i < n_cats; ++i)
            std::swap(order[static_cast<std::size_t>(i)],
                      order[static_cast<std::size_t>(rng.between(i, static_cast<int>(order.size()) - 1))]);
        BenchPrompt bp;
        bp.kind = kind;
        std::vector<std::string> clauses;
        for (int i = 0; i < n_cats; ++i) {
            int n = rng.between(count_min, count_max);
            bp.targets[order[static_cast<std::size_t>(i)]] = n;
            clauses.push_back(counted(n, order[static_cast<std::size_t>(i)]));
        }
        std::string joined = clauses.front();
        for (std::size_t i = 1; i < clauses.size(); ++i)
            joined += (i + 1 == clauses.size() ? " and " : ", ") + clauses[i];
        const auto& context = contexts[rng.below(contexts.size())];
        bp.prompt = fmt::format("A photo of {} {}", joined, context);
        auto parsed = parse_prompt(bp.prompt);
        if (parsed.targets != bp.targets)
            throw ConfigError("generated prompt does not parse back to its targets: " + bp.prompt);
        suite.prompts.push_back(std::move(bp));
    }
    return suite;
}

void save_suite(const BenchSuite& suite, const std::filesystem::path& file) {
    if (file.has_parent_path())
        std::filesystem::create_directories(file.parent_path());
    {
        std::ofstream out(file, std::ios::binary);
        for (const auto& p : suite.prompts)
            out << nlohmann::json{{"prompt", p.prompt}, {"targets", p.targets}, {"kind", kind_name(p.kind)}}.dump() << '\n';
        if (!out)
            throw Error("cannot write " + file.string());
    }
    nlohmann::json meta{{"name", suite.name},
                        {"kind", kind_name(suite.kind)},
                        {"provenance",
                         {{"categories", suite.provenance.categories},
                          {"count_min", suite.provenance.count_min},
                          {"count_max", suite.provenance.count_max},
                          {"n_prompts", suite.provenance.n_prompts},
                          {"seed", suite.provenance.seed}}}};
    std::ofstream out(file.string() + ".meta.json", std::ios::binary);
    out << meta.dump(2) << '\n';
}

BenchSuite load_suite(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in)
        throw ConfigError("cannot open suite " + file.string());
    BenchSuite suite;
    suite.name = file.stem().string();
    std::filesystem::path meta_path = file.string() + ".meta.json";
    if (std::filesystem::exists(meta_path)) {
        std::ifstream meta_in(meta_path);
        auto meta = nlohmann::json::parse(meta_in, nullptr, false);
        if (meta.is_discarded() || !meta.is_object())
            throw ConfigError("suite metadata is not JSON: " + meta_path.string());
        suite.name = meta.value("name", suite.name);
        suite.kind = kind_from(meta.value("kind", std::string("S")));
        if (auto p = meta.find("provenance"); p != meta.end() && p->is_object()) {
            suite.provenance.categories = p->value("categories", std::vector<std::string>{});
            suite.provenance.count_min = p->value("count_min", 30);
            suite.provenance.count_max = p->value("count_max", 200);
            suite.provenance.n_prompts = p->value("n_prompts", 0);
            suite.provenance.seed = p->value("seed", std::uint64_t{42});
        }
    }
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty())
            continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("prompt") || !j.contains("targets"))
            throw ConfigError(fmt::format("{}:{}: not a suite record", file.string(), lineno));
        BenchPrompt p;
        try {
            p.prompt = j["prompt"].get<std::string>();
            p.targets = j["targets"].get<CountMap>();
            p.kind = kind_from(j.value("kind", kind_name(suite.kind)));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(fmt::format("{}:{}: {}", file.string(), lineno, e.what()));
        }
        PromptSpec parsed;
        try {
            parsed = parse_prompt(p.prompt);
        } catch (const ParseError& e) {
            throw ConfigError(fmt::format("{}:{}: prompt no longer parses: {}", file.string(), lineno, e.what()));
        }
        if (parsed.targets != p.targets)
            throw ConfigError(fmt::format("{}:{}: prompt parses to {} but the suite stores {}", file.string(), lineno,
                                          nlohmann::json(parsed.targets).dump(), nlohmann::json(p.targets).dump()));
        suite.prompts.push_back(std::move(p));
    }
    return suite;
}

BenchMetrics aggregate(const std::vector<RunReport>& reports, int failures) {
    BenchMetrics m;
    m.failures = failures;
    CountMetrics tally;
    int exact = 0, with_aesthetic = 0, converge_iters = 0;
    double aesthetic_sum = 0.0, iteration_sum = 0.0;
    for (const auto& r : reports) {
        if (r.iterations.empty() || r.accepted < 0)
            continue;
        ++m.runs;
        const auto& it = r.accepted_iteration();
        accumulate(tally, it.detection.counts, r.spec.targets);
        exact += tally.exact ? 1 : 0;
        if (it.aesthetic) {
            aesthetic_sum += *it.aesthetic;
            ++with_aesthetic;
        }
        iteration_sum += static_cast<double>(r.iterations.size());
        if (r.converged) {
            ++m.converged;
            converge_iters += static_cast<int>(r.iterations.size());
        }
    }
    finalize(tally);
    m.f1 = tally.f1;
    if (m.runs > 0) {
        m.accuracy = static_cast<double>(exact) / m.runs;
        m.mean_iterations = iteration_sum / m.runs;
    }
    if (with_aesthetic > 0)
        m.mean_aesthetic = aesthetic_sum / with_aesthetic;
    if (m.converged > 0)
        m.mean_iterations_to_converge = static_cast<double>(converge_iters) / m.converged;
    return m;
}

BenchSummary run_bench(const BenchSuite& suite, const RunConfig& config, const BackendFactory& backends,
                       const BenchOptions& options) {
    if (suite.prompts.empty())
        throw ConfigError("bench suite is empty");
    config.validate();
    const auto runs_dir = options.out_dir / "runs";
    std::filesystem::create_directories(runs_dir);

    std::vector<RunOutcome> outcomes(suite.prompts.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < suite.prompts.size(); i = next++) {
            auto& out = outcomes[i];
            const auto& prompt = suite.prompts[i];
            for (const auto& [_, n] : prompt.targets)
                out.instances += n;
            RunConfig cfg = config;
            cfg.seed = config.seed + i;
            RunOptions ropts = options.run;
            ropts.out_dir = runs_dir / std::to_string(i);
            auto start = std::chrono::steady_clock::now();
            try {
                out.report = run(prompt.prompt, cfg, backends(), ropts);
                if (out.report->error)
                    out.error = *out.report->error;
            } catch (const std::exception& e) {
                out.error = e.what();
                std::filesystem::create_directories(*ropts.out_dir);
                std::ofstream(*ropts.out_dir / "error.txt") << e.what() << '\n';
            }
            out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        }
    };
    const int threads = std::clamp(options.parallelism, 1, static_cast<int>(suite.prompts.size()));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t)
            pool.emplace_back(worker);
        for (auto& t : pool)
            t.join();
    }

    std::vector<RunReport> finished;
    int failures = 0;
    for (auto& o : outcomes) {
        if (o.report && o.error.empty())
            finished.push_back(*o.report);
        else
            ++failures;
    }
    BenchSummary summary;
    summary.suite = suite.name;
    summary.metrics = aggregate(finished, failures);
    for (auto b : kBuckets) {
        RuntimeBucket rb{b.lo, b.hi, 0, 0.0, 0.0};
        std::vector<double> times;
        for (const auto& o : outcomes)
            if (o.error.empty() && o.instances >= b.lo && o.instances <= b.hi)
                times.push_back(o.seconds);
        if (times.empty())
            continue;
        rb.runs = static_cast<int>(times.size());
        for (double t : times)
            rb.mean_seconds += t;
        rb.mean_seconds /= rb.runs;
        for (double t : times)
            rb.std_seconds += (t - rb.mean_seconds) * (t - rb.mean_seconds);
        rb.std_seconds = std::sqrt(rb.std_seconds / rb.runs);
        summary.runtime.push_back(rb);
    }
    {
        std::ofstream out(options.out_dir / "summary.json", std::ios::binary);
        out << nlohmann::json(summary).dump(2) << '\n';
    }
    {
        std::ofstream out(options.out_dir / "summary.txt", std::ios::binary);
        out << format_summary_table(summary);
    }
    return summary;
}

BenchMetrics recompute_metrics(const std::filesystem::path& bench_dir) {
    std::vector<std::pair<long, std::filesystem::path>> dirs;
    for (const auto& entry : std::filesystem::directory_iterator(bench_dir / "runs")) {
        if (!entry.is_directory())
            continue;
        auto name = entry.path().filename().string();
        if (name.empty() || !std::all_of(name.begin(), name.end(), [](unsigned char c) { return std::isdigit(c); }))
            continue;
        dirs.emplace_back(std::stol(name), entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    std::vector<RunReport> reports;
    int failures = 0;
    for (const auto& [_, dir] : dirs) {
        std::ifstream in(dir / "run.json");
        if (!in) {
            ++failures;
            continue;
        }
        auto j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_discarded()) {
            ++failures;
            continue;
        }
        auto report = j.get<RunReport>();
        if (report.error)
            ++failures;
        else
            reports.push_back(std::move(report));
    }
    return aggregate(reports, failures);
}

std::string format_summary_table(const BenchSummary& s) {
    const auto& m = s.metrics;
    std::string out;
    auto row = [&](std::string_view key, const std::string& value) { out += fmt::format("{:<28}{}\n", key, value); };
    row("suite", s.suite);
    row("runs", fmt::format("{} ({} failed)", m.runs, m.failures));
    row("count F1", fmt::format("{:.4f}", m.f1));
    row("exact-match accuracy", fmt::format("{:.4f}", m.accuracy));
    row("mean aesthetic", fmt::format("{:.4f}", m.mean_aesthetic));
    row("mean iterations", fmt::format("{:.2f}", m.mean_iterations));
    row("converged", fmt::format("{} / {}", m.converged, m.runs));
    row("mean iterations to converge", fmt::format("{:.2f}", m.mean_iterations_to_converge));
    if (!s.runtime.empty()) {
        out += "\nruntime per run (seconds, mean ± std)\n";
        for (const auto& b : s.runtime) {
            auto range = b.hi >= 1000000 ? fmt::format("{}+", b.lo) : fmt::format("{}-{}", b.lo, b.hi);
            out += fmt::format("  {:<12}{:>6} runs  {:.3f} ± {:.3f}\n", range + " inst", b.runs, b.mean_seconds,
                               b.std_seconds);
        }
    }
    return out;
}

void to_json(nlohmann::json& j, const BenchMetrics& m) {
    j = nlohmann::json{{"runs", m.runs},
                       {"failures", m.failures},
                       {"f1", m.f1},
                       {"accuracy", m.accuracy},
                       {"mean_aesthetic", m.mean_aesthetic},
                       {"mean_iterations", m.mean_iterations},
                       {"mean_iterations_to_converge", m.mean_iterations_to_converge},
                       {"converged", m.converged}};
}

void from_json(const nlohmann::json& j, BenchMetrics& m) {
    m.runs = j.at("runs").get<int>();
    m.failures = j.at("failures").get<int>();
    m.f1 = j.at("f1").get<double>();
    m.accuracy = j.at("accuracy").get<double>();
    m.mean_aesthetic = j.at("mean_aesthetic").get<double>();
    m.mean_iterations = j.at("mean_iterations").get<double>();
    m.mean_iterations_to_converge = j.at("mean_iterations_to_converge").get<double>();
    m.converged = j.at("converged").get<int>();
}

void to_json(nlohmann::json& j, const BenchSummary& s) {
    auto buckets = nlohmann::json::array();
    for (const auto& b : s.runtime)
        buckets.push_back({{"instances", {b.lo, b.hi}}, {"runs", b.runs}, {"mean_seconds", b.mean_seconds},
                           {"std_seconds", b.std_seconds}});
    j = nlohmann::json{{"suite", s.suite}, {"metrics", s.metrics}, {"runtime", buckets}};
}

} // namespace countloop
