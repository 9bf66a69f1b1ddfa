// SPDX-License-Identifier: Apache-2.0
// Shared fixtures for the unit tests and the acceptance gate.
#pragma once

#include "countloop/graph.hpp"
#include "countloop/layout.hpp"
#include "countloop/rng.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

namespace countloop::testing {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(COUNTLOOP_FIXTURES) / name; }

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline nlohmann::json read_json(const std::filesystem::path& p) { return nlohmann::json::parse(read_file(p)); }

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("countloop_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline InstanceBox make_box(const std::string& category, int k, PixelRect r, double depth = 0.5) {
    InstanceBox b;
    b.id = make_node_id(category, k);
    b.category = category;
    b.bbox = r;
    b.depth = depth;
    return b;
}

/// rows x cols lattice of size x size boxes at the given pitch.
inline Layout lattice(int rows, int cols, int size, int pitch, int origin = 100, int res = 1024,
                      const std::string& category = "watch") {
    Layout l;
    l.resolution = res;
    int k = 1;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            int x = origin + c * pitch, y = origin + r * pitch;
            l.boxes.push_back(make_box(category, k++, {x, y, x + size, y + size}));
        }
    assign_paint_order(l.boxes);
    return l;
}

/// Random boxes anywhere on the canvas; overlaps allowed.
inline Layout random_layout(Rng& rng, int n, int res, int min_side, int max_side,
                            const std::vector<std::string>& categories) {
    Layout l;
    l.resolution = res;
    std::map<std::string, int> next;
    for (int i = 0; i < n; ++i) {
        const auto& cat = categories[rng.below(categories.size())];
        int w = rng.between(min_side, max_side), h = rng.between(min_side, max_side);
        int x = rng.between(0, res - w), y = rng.between(0, res - h);
        l.boxes.push_back(make_box(cat, ++next[cat], {x, y, x + w, y + h}, rng.uniform()));
    }
    assign_paint_order(l.boxes);
    return l;
}

/// Random boxes whose pairwise gaps are at least `gap` (rejection sampling).
inline Layout random_disjoint_layout(Rng& rng, int n, int res, int min_side, int max_side, double gap,
                                     const std::vector<std::string>& categories) {
    Layout l;
    l.resolution = res;
    std::map<std::string, int> next;
    int attempts = 0;
    while (static_cast<int>(l.boxes.size()) < n && attempts++ < 100000) {
        const auto& cat = categories[rng.below(categories.size())];
        int w = rng.between(min_side, max_side), h = rng.between(min_side, max_side);
        int x = rng.between(0, res - w), y = rng.between(0, res - h);
        PixelRect r{x, y, x + w, y + h};
        bool ok = true;
        for (const auto& b : l.boxes)
            if (box_gap(r, b.bbox) < gap) {
                ok = false;
                break;
            }
        if (ok)
            l.boxes.push_back(make_box(cat, ++next[cat], r, rng.uniform()));
    }
    assign_paint_order(l.boxes);
    return l;
}

} // namespace countloop::testing
