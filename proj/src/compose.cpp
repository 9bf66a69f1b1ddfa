// SPDX-License-Identifier: Apache-2.0
#include "countloop/compose.hpp"

#include "countloop/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace countloop {

BinaryMask box_mask(const PixelRect& box, int height, int width) {
    if (height <= 0 || width <= 0)
        throw DimError(fmt::format("mask canvas {}x{} is empty", height, width));
    if (box.x0 < 0 || box.y0 < 0 || box.x1 > width || box.y1 > height || box.x0 >= box.x1 || box.y0 >= box.y1)
        throw DimError(fmt::format("box [{}, {}, {}, {}] does not fit a {}x{} canvas", box.x0, box.y0, box.x1, box.y1,
                                   height, width));
    BinaryMask m(height, width);
    for (int y = box.y0; y < box.y1; ++y)
        std::fill_n(m.bits.begin() + static_cast<std::ptrdiff_t>(y) * width + box.x0, box.x1 - box.x0, std::uint8_t{1});
    return m;
}

FeatureMap mask_attention(const FeatureMap& a, const BinaryMask& m) {
    if (a.height != m.height || a.width != m.width)
        throw DimError(fmt::format("feature map {}x{} vs mask {}x{}", a.height, a.width, m.height, m.width));
    FeatureMap out(a.height, a.width, a.depth);
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) {
            if (!m.at(y, x))
                continue;
            auto src = a.values.begin() + static_cast<std::ptrdiff_t>(a.offset(y, x));
            std::copy(src, src + a.depth, out.values.begin() + static_cast<std::ptrdiff_t>(out.offset(y, x)));
        }
    return out;
}

std::vector<FeatureMap> cumulative_compose(std::span<const CompositionItem> items, int height, int width, int depth) {
    if (height <= 0 || width <= 0 || depth <= 0)
        throw DimError("composition canvas must be non-empty");
    std::vector<FeatureMap> prefixes;
    prefixes.reserve(items.size());
    FeatureMap canvas(height, width, depth);
    for (const auto& item : items) {
        const auto& b = item.box;
        // Validates the box against the canvas.
        (void)box_mask(b, height, width);
        if (item.patch.height != b.height() || item.patch.width != b.width() || item.patch.depth != depth)
            throw DimError(fmt::format("patch {}x{}x{} does not match box {}x{} with depth {}", item.patch.height,
                                       item.patch.width, item.patch.depth, b.height(), b.width(), depth));
        for (int y = b.y0; y < b.y1; ++y) {
            auto src = item.patch.values.begin() + static_cast<std::ptrdiff_t>(item.patch.offset(y - b.y0, 0));
            std::copy(src, src + static_cast<std::ptrdiff_t>(b.width()) * depth,
                      canvas.values.begin() + static_cast<std::ptrdiff_t>(canvas.offset(y, b.x0)));
        }
        prefixes.push_back(canvas);
    }
    return prefixes;
}

TokenMatrix attention_weights(const TokenMatrix& q, const TokenMatrix& k) {
    if (q.depth != k.depth)
        throw DimError(fmt::format("query depth {} vs key depth {}", q.depth, k.depth));
    if (k.rows <= 0 || q.depth <= 0)
        throw DimError("attention needs at least one key and a positive depth");
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.depth));
    TokenMatrix w(q.rows, k.rows);
    for (int r = 0; r < q.rows; ++r) {
        double peak = -INFINITY;
        for (int c = 0; c < k.rows; ++c) {
            double dot = 0.0;
            for (int t = 0; t < q.depth; ++t)
                dot += q.at(r, t) * k.at(c, t);
            w.at(r, c) = dot * scale;
            peak = std::max(peak, w.at(r, c));
        }
        double sum = 0.0;
        for (int c = 0; c < k.rows; ++c) {
            w.at(r, c) = std::exp(w.at(r, c) - peak);
            sum += w.at(r, c);
        }
        for (int c = 0; c < k.rows; ++c)
            w.at(r, c) /= sum;
    }
    return w;
}

TokenMatrix attention(const TokenMatrix& q, const TokenMatrix& k, const TokenMatrix& v) {
    if (k.rows != v.rows)
        throw DimError(fmt::format("{} keys vs {} values", k.rows, v.rows));
    auto w = attention_weights(q, k);
    TokenMatrix out(q.rows, v.depth);
    for (int r = 0; r < q.rows; ++r)
        for (int c = 0; c < k.rows; ++c) {
            const double weight = w.at(r, c);
            for (int t = 0; t < v.depth; ++t)
                out.at(r, t) += weight * v.at(c, t);
        }
    return out;
}

std::vector<TokenMatrix> expanded_attention(std::span<const TokenMatrix> queries, const TokenMatrix& k,
                                            const TokenMatrix& v) {
    int total = 0;
    for (const auto& q : queries) {
        if (q.depth != k.depth)
            throw DimError(fmt::format("query depth {} vs key depth {}", q.depth, k.depth));
        total += q.rows;
    }
    TokenMatrix stacked(total, k.depth);
    auto dst = stacked.values.begin();
    for (const auto& q : queries)
        dst = std::copy(q.values.begin(), q.values.end(), dst);
    auto joint = attention(stacked, k, v);

    std::vector<TokenMatrix> out;
    out.reserve(queries.size());
    auto src = joint.values.begin();
    for (const auto& q : queries) {
        TokenMatrix block(q.rows, v.depth);
        auto n = static_cast<std::ptrdiff_t>(block.values.size());
        std::copy(src, src + n, block.values.begin());
        src += n;
        out.push_back(std::move(block));
    }
    return out;
}

namespace {

template <class T> void put_le(std::ostream& out, T value) {
    static_assert(sizeof(T) == 4);
    std::uint32_t bits;
    std::memcpy(&bits, &value, 4);
    if constexpr (std::endian::native == std::endian::big)
        bits = __builtin_bswap32(bits);
    out.write(reinterpret_cast<const char*>(&bits), 4);
}

template <class T> T get_le(std::istream& in) {
    std::uint32_t bits = 0;
    if (!in.read(reinterpret_cast<char*>(&bits), 4))
        throw DimError("feature map file is truncated");
    if constexpr (std::endian::native == std::endian::big)
        bits = __builtin_bswap32(bits);
    T value;
    std::memcpy(&value, &bits, 4);
    return value;
}

} // namespace

void write_feature_map(const std::filesystem::path& path, const FeatureMap& f) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write " + path.string());
    put_le<std::int32_t>(out, f.height);
    put_le<std::int32_t>(out, f.width);
    put_le<std::int32_t>(out, f.depth);
    for (float v : f.values)
        put_le<float>(out, v);
}

FeatureMap read_feature_map(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot read " + path.string());
    int h = get_le<std::int32_t>(in), w = get_le<std::int32_t>(in), d = get_le<std::int32_t>(in);
    if (h < 0 || w < 0 || d < 0)
        throw DimError("feature map header has negative dimensions");
    FeatureMap f(h, w, d);
    for (auto& v : f.values)
        v = get_le<float>(in);
    return f;
}

} // namespace countloop
