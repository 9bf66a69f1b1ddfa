// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "countloop/geometry.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <string>
#include <vector>

namespace countloop {

using CountMap = std::map<std::string, int>;

struct Detection {
    std::string category;
    PixelRect box;
    double confidence = 1.0;
    bool operator==(const Detection&) const = default;
};

struct DetectionReport {
    CountMap counts;
    std::vector<Detection> boxes;

    int count(const std::string& category) const;
    int total() const;
    bool operator==(const DetectionReport&) const = default;
};

inline constexpr double kDefaultConfidence = 0.3;

/// Recounts from boxes at or above the confidence threshold. A report without
/// boxes is returned as is.
DetectionReport apply_confidence(DetectionReport report, double threshold);

struct ScoreBreakdown {
    double count_term = 0.0;
    double aesthetic = 0.0;
    double composite = 0.0;
    std::map<std::string, double> per_category;
    bool operator==(const ScoreBreakdown&) const = default;
};

inline constexpr double kDefaultAlpha = 0.6;
inline constexpr double kDefaultBeta = 0.4;
inline constexpr double kDefaultThreshold = 0.85;

/// Per category: max(0, 1 - |detected - target| / target); count_term is the
/// unweighted mean over target categories; S = alpha * count_term + beta * s_a.
/// Categories detected but not targeted are ignored. Throws ConfigError when
/// alpha + beta != 1 or a target is < 1.
ScoreBreakdown composite_score(const DetectionReport& detected, const CountMap& targets, double aesthetic,
                               double alpha = kDefaultAlpha, double beta = kDefaultBeta);

struct CountMetrics {
    long long tp = 0;
    long long fp = 0;
    long long fn = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool exact = false;
};

/// Micro-averaged count F1 plus exact match over the target categories.
CountMetrics count_f1(const CountMap& detected, const CountMap& targets);

/// Accumulates TP/FP/FN into an existing tally (for micro averaging over runs).
void accumulate(CountMetrics& tally, const CountMap& detected, const CountMap& targets);
/// Fills precision/recall/f1 from tp/fp/fn.
void finalize(CountMetrics& m);

/// S > threshold (or >= when inclusive) and exact counts on every target category.
bool termination_check(double composite, const CountMap& detected, const CountMap& targets, double threshold,
                       bool inclusive = false);

void to_json(nlohmann::json& j, const Detection& d);
void from_json(const nlohmann::json& j, Detection& d);
void to_json(nlohmann::json& j, const DetectionReport& r);
void from_json(const nlohmann::json& j, DetectionReport& r);
void to_json(nlohmann::json& j, const ScoreBreakdown& s);
void from_json(const nlohmann::json& j, ScoreBreakdown& s);

} // namespace countloop
