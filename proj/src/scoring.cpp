// SPDX-License-Identifier: Apache-2.0
#include "countloop/scoring.hpp"

#include "countloop/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace countloop {

int DetectionReport::count(const std::string& category) const {
    auto it = counts.find(category);
    return it == counts.end() ? 0 : it->second;
}

int DetectionReport::total() const {
    int sum = 0;
    for (const auto& [_, n] : counts)
        sum += n;
    return sum;
}

DetectionReport apply_confidence(DetectionReport report, double threshold) {
    if (report.boxes.empty())
        return report;
    CountMap recount;
    for (const auto& [category, _] : report.counts)
        recount[category] = 0;
    std::erase_if(report.boxes, [threshold](const Detection& b) { return b.confidence < threshold; });
    for (const auto& b : report.boxes)
        ++recount[b.category];
    report.counts = std::move(recount);
    return report;
}

ScoreBreakdown composite_score(const DetectionReport& detected, const CountMap& targets, double aesthetic, double alpha,
                               double beta) {
    if (std::abs(alpha + beta - 1.0) > 1e-9 || alpha < 0 || beta < 0)
        throw ConfigError(fmt::format("alpha + beta must be 1 (got {} + {})", alpha, beta));
    if (targets.empty())
        throw ConfigError("composite score needs at least one target category");
    ScoreBreakdown s;
    double sum = 0.0;
    for (const auto& [category, target] : targets) {
        if (target < 1)
            throw ConfigError(fmt::format("target for '{}' must be at least 1", category));
        double diff = std::abs(detected.count(category) - target);
        double term = std::max(0.0, 1.0 - diff / target);
        s.per_category[category] = term;
        sum += term;
    }
    s.count_term = sum / static_cast<double>(targets.size());
    s.aesthetic = aesthetic;
    s.composite = alpha * s.count_term + beta * aesthetic;
    return s;
}

void accumulate(CountMetrics& tally, const CountMap& detected, const CountMap& targets) {
    bool exact = true;
    for (const auto& [category, gt] : targets) {
        auto it = detected.find(category);
        long long det = it == detected.end() ? 0 : it->second;
        tally.tp += std::min<long long>(det, gt);
        tally.fp += std::max<long long>(0, det - gt);
        tally.fn += std::max<long long>(0, gt - det);
        exact = exact && det == gt;
    }
    tally.exact = exact;
}

void finalize(CountMetrics& m) {
    m.precision = m.tp + m.fp > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
    m.recall = m.tp + m.fn > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
    // 2TP / (2TP + FP + FN): same value as 2PR/(P+R), without the extra rounding.
    long long denom = 2 * m.tp + m.fp + m.fn;
    m.f1 = denom > 0 ? static_cast<double>(2 * m.tp) / static_cast<double>(denom) : 0.0;
}

CountMetrics count_f1(const CountMap& detected, const CountMap& targets) {
    CountMetrics m;
    accumulate(m, detected, targets);
    finalize(m);
    return m;
}

bool termination_check(double composite, const CountMap& detected, const CountMap& targets, double threshold,
                       bool inclusive) {
    bool score_ok = inclusive ? composite >= threshold : composite > threshold;
    if (!score_ok)
        return false;
    for (const auto& [category, gt] : targets) {
        auto it = detected.find(category);
        if ((it == detected.end() ? 0 : it->second) != gt)
            return false;
    }
    return true;
}

void to_json(nlohmann::json& j, const Detection& d) {
    j = nlohmann::json{{"category", d.category}, {"box", d.box}, {"confidence", d.confidence}};
}

void from_json(const nlohmann::json& j, Detection& d) {
    if (!j.is_object())
        throw SchemaError("detection must be a JSON object");
    try {
        d.category = j.at("category").get<std::string>();
        auto box = j.find("box");
        if (box == j.end())
            box = j.find("bbox");
        if (box == j.end())
            throw SchemaError("detection requires \"box\"");
        d.box = box->get<PixelRect>();
        d.confidence = j.value("confidence", 1.0);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed detection: ") + e.what());
    }
    if (!(d.confidence >= 0.0 && d.confidence <= 1.0))
        throw SchemaError("detection confidence must lie in [0,1]");
}

void to_json(nlohmann::json& j, const DetectionReport& r) {
    j = nlohmann::json{{"counts", r.counts}, {"boxes", r.boxes}};
}

void from_json(const nlohmann::json& j, DetectionReport& r) {
    if (!j.is_object())
        throw SchemaError("detection report must be a JSON object");
    r = DetectionReport{};
    auto counts = j.find("counts");
    if (counts == j.end() || !counts->is_object())
        throw SchemaError("detection report requires a \"counts\" object");
    for (const auto& [category, v] : counts->items()) {
        if (!v.is_number_integer() || v.get<long long>() < 0)
            throw SchemaError("count for '" + category + "' must be a non-negative integer");
        r.counts[category] = v.get<int>();
    }
    if (auto boxes = j.find("boxes"); boxes != j.end() && !boxes->is_null()) {
        if (!boxes->is_array())
            throw SchemaError("\"boxes\" must be an array");
        for (const auto& b : *boxes)
            r.boxes.push_back(b.get<Detection>());
    }
}

void to_json(nlohmann::json& j, const ScoreBreakdown& s) {
    j = nlohmann::json{{"count_term", s.count_term},
                       {"aesthetic", s.aesthetic},
                       {"composite", s.composite},
                       {"per_category", s.per_category}};
}

void from_json(const nlohmann::json& j, ScoreBreakdown& s) {
    try {
        s.count_term = j.at("count_term").get<double>();
        s.aesthetic = j.at("aesthetic").get<double>();
        s.composite = j.at("composite").get<double>();
        s.per_category = j.value("per_category", std::map<std::string, double>{});
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed score: ") + e.what());
    }
}

} // namespace countloop
