#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "fundaq/image.hpp"
#include "fundaq/rng.hpp"

namespace fundaq::testkit {

// Bright disc on a dark field with sub-threshold sensor noise.
inline ImageBuffer disc_image(int side, double cx, double cy, double r, Rgb color, Rng* noise = nullptr) {
    ImageBuffer img(side, side);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) img.at(x, y) = color;
            else if (noise) {
                const auto n = static_cast<std::uint8_t>(noise->below(9));
                img.at(x, y) = {n, n, n};
            }
        }
    return img;
}

// Brute-force bbox: a row or column belongs to the box if any pixel's weighted
// sum reaches the rounded threshold boundary.
inline std::optional<BoundingBox> oracle_bbox(const ImageBuffer& img, int threshold) {
    auto bright = [&](int x, int y) {
        const Rgb p = img.at(x, y);
        return 299 * p.r + 587 * p.g + 114 * p.b >= 1000 * threshold + 500;
    };
    std::vector<bool> rows(static_cast<std::size_t>(img.height())), cols(static_cast<std::size_t>(img.width()));
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            if (bright(x, y)) rows[static_cast<std::size_t>(y)] = cols[static_cast<std::size_t>(x)] = true;
    auto span = [](const std::vector<bool>& v) -> std::optional<std::pair<int, int>> {
        int lo = -1, hi = -1;
        for (std::size_t i = 0; i < v.size(); ++i)
            if (v[i]) {
                if (lo < 0) lo = static_cast<int>(i);
                hi = static_cast<int>(i);
            }
        if (lo < 0) return std::nullopt;
        return std::pair{lo, hi};
    };
    const auto r = span(rows), c = span(cols);
    if (!r) return std::nullopt;
    return BoundingBox{c->first, r->first, c->second - c->first + 1, r->second - r->first + 1};
}

}  // namespace fundaq::testkit
