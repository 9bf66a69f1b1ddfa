// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "countloop/layout.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace countloop {

struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> bits;  // row-major, 0 or 1

    BinaryMask() = default;
    BinaryMask(int h, int w, std::uint8_t fill = 0) : height(h), width(w), bits(static_cast<std::size_t>(h) * w, fill) {}

    std::uint8_t at(int y, int x) const { return bits[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t& at(int y, int x) { return bits[static_cast<std::size_t>(y) * width + x]; }
    bool operator==(const BinaryMask&) const = default;
};

/// H x W x D grid of features, row-major with channels innermost.
struct FeatureMap {
    int height = 0;
    int width = 0;
    int depth = 0;
    std::vector<float> values;

    FeatureMap() = default;
    FeatureMap(int h, int w, int d, float fill = 0.0f)
        : height(h), width(w), depth(d), values(static_cast<std::size_t>(h) * w * d, fill) {}

    std::size_t offset(int y, int x) const { return (static_cast<std::size_t>(y) * width + x) * depth; }
    float at(int y, int x, int c) const { return values[offset(y, x) + c]; }
    float& at(int y, int x, int c) { return values[offset(y, x) + c]; }
    bool operator==(const FeatureMap&) const = default;
};

/// rows x depth, row-major.
struct TokenMatrix {
    int rows = 0;
    int depth = 0;
    std::vector<double> values;

    TokenMatrix() = default;
    TokenMatrix(int r, int d, double fill = 0.0) : rows(r), depth(d), values(static_cast<std::size_t>(r) * d, fill) {}

    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * depth + c]; }
    double& at(int r, int c) { return values[static_cast<std::size_t>(r) * depth + c]; }
    std::span<const double> row(int r) const { return {values.data() + static_cast<std::size_t>(r) * depth, static_cast<std::size_t>(depth)}; }
    bool operator==(const TokenMatrix&) const = default;
};

/// 1 on the half-open rectangle [x0,x1) x [y0,y1), 0 elsewhere.
/// Throws DimError when the box does not fit an H x W canvas.
BinaryMask box_mask(const PixelRect& box, int height, int width);

/// Elementwise gate: out(y,x,:) = a(y,x,:) * m(y,x). Throws DimError.
FeatureMap mask_attention(const FeatureMap& a, const BinaryMask& m);

struct CompositionItem {
    PixelRect box;      // in feature-canvas coordinates
    FeatureMap patch;   // box.height() x box.width() x D
};

/// Pastes instance patches one by one onto a zero canvas. F_{i+1} equals F_i
/// outside box i+1; inside it the patch overwrites, so later (nearer) items
/// occlude earlier ones. Items must already be in far-to-near order. Returns
/// F_1..F_N. Throws DimError on patch/box or depth mismatch.
std::vector<FeatureMap> cumulative_compose(std::span<const CompositionItem> items, int height, int width, int depth);

/// Row-wise softmax(q k^T / sqrt(d)) v with max subtraction. Throws DimError.
TokenMatrix attention(const TokenMatrix& q, const TokenMatrix& k, const TokenMatrix& v);

/// The attention weights themselves (rows x keys); exposed for property checks.
TokenMatrix attention_weights(const TokenMatrix& q, const TokenMatrix& k);

/// Object-aware expansion: the instance queries are stacked into one matrix and
/// attend to a shared K/V in a single call; the output is split back per
/// instance. Each block equals attention(queries[i], k, v) exactly.
std::vector<TokenMatrix> expanded_attention(std::span<const TokenMatrix> queries, const TokenMatrix& k, const TokenMatrix& v);

/// Golden fixture format: int32 H, W, D header then H*W*D float32, little endian.
void write_feature_map(const std::filesystem::path& path, const FeatureMap& f);
FeatureMap read_feature_map(const std::filesystem::path& path);

} // namespace countloop
