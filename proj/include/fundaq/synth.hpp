#pragma once

// Synthetic fundus renderer with parameter-derived FundaQ-8 ground truth.
//
// Geometry is expressed in units of the image side, so the same parameters
// render comparable images at any resolution; blur_sigma alone is in pixels.
//
// Ground-truth rules (constants below):
//   resolution      blur_sigma < 1 -> 2, < 3 -> 1, else 0
//   field_of_view   coverage >= 0.85 -> 2, >= 0.6 -> 1, else 0
//   color_fidelity  color_cast < 0.2 -> 2, < 0.5 -> 1, else 0
//   artifacts       glare_count == 0 -> 2, <= 2 -> 1, else 0
//   vessels         min(contrast level, resolution level)
//   macula, optic_disc, optic_cup
//                   min(contrast level, visibility level)
// where contrast level is >= 0.6 -> 2, >= 0.3 -> 1, else 0 and visibility
// level is the visible fraction of the structure's pixel mask (inside the
// coverage aperture, outside every glare spot): >= 0.9 -> 2, >= 0.5 -> 1, else 0.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "fundaq/image.hpp"
#include "fundaq/rng.hpp"
#include "fundaq/rubric.hpp"

namespace fundaq::synth {

struct AnatomyContrast {
    double vessels = 1.0;
    double macula = 1.0;
    double disc = 1.0;
    double cup = 1.0;
};

struct SynthParams {
    double blur_sigma = 0.0;  // pixels
    double coverage = 1.0;    // visible fraction of the retinal disc area
    double color_cast = 0.0;
    int glare_count = 0;
    AnatomyContrast contrast;
    std::uint64_t seed = 0;
};

namespace rules {
inline constexpr double kBlurSharp = 1.0;
inline constexpr double kBlurSoft = 3.0;
inline constexpr double kCoverageFull = 0.85;
inline constexpr double kCoveragePartial = 0.6;
inline constexpr double kCastSlight = 0.2;
inline constexpr double kCastSevere = 0.5;
inline constexpr int kGlareMinorMax = 2;
inline constexpr double kContrastClear = 0.6;
inline constexpr double kContrastPartial = 0.3;
inline constexpr double kVisibleClear = 0.9;
inline constexpr double kVisiblePartial = 0.5;

inline int blur_level(double sigma) { return sigma < kBlurSharp ? 2 : sigma < kBlurSoft ? 1 : 0; }
inline int coverage_level(double c) { return c >= kCoverageFull ? 2 : c >= kCoveragePartial ? 1 : 0; }
inline int cast_level(double c) { return c < kCastSlight ? 2 : c < kCastSevere ? 1 : 0; }
inline int glare_level(int n) { return n == 0 ? 2 : n <= kGlareMinorMax ? 1 : 0; }
inline int contrast_level(double c) { return c >= kContrastClear ? 2 : c >= kContrastPartial ? 1 : 0; }
inline int visibility_level(double f) { return f >= kVisibleClear ? 2 : f >= kVisiblePartial ? 1 : 0; }
}  // namespace rules

inline void validate(const SynthParams& p) {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!(p.blur_sigma >= 0.0) || !unit(p.coverage) || !unit(p.color_cast) || p.glare_count < 0 ||
        !unit(p.contrast.vessels) || !unit(p.contrast.macula) || !unit(p.contrast.disc) || !unit(p.contrast.cup))
        throw std::invalid_argument("synthetic parameters out of range");
}

struct Circle {
    double cx, cy, r;  // side-relative
};

struct Vessel {
    double start_angle;
    double curvature;
    double length;
    double width;  // side-relative
};

/// Scene geometry. Anatomy jitter and glare positions come from independent
/// streams of the seed, so adding glare spots never moves earlier ones.
struct Layout {
    Circle retina;
    double aperture_r;
    Circle macula;
    Circle disc;
    Circle cup;
    std::vector<Vessel> vessels;
    std::vector<Circle> glare;
    std::array<double, 3> base_color;
};

inline constexpr double kRetinaRadius = 0.46;
inline constexpr double kGlareRadius = 0.07;

inline Layout make_layout(const SynthParams& p) {
    Rng anatomy(p.seed ^ 0x9E3779B97F4A7C15ull);
    Layout L;
    L.retina = {0.5, 0.5, kRetinaRadius};
    L.aperture_r = kRetinaRadius * std::sqrt(p.coverage);
    const double dx = anatomy.uniform(-0.02, 0.02), dy = anatomy.uniform(-0.02, 0.02);
    L.disc = {0.5 + 0.22 + dx, 0.5 + dy, 0.075};
    L.cup = {L.disc.cx, L.disc.cy, 0.035};
    L.macula = {0.5 - 0.08 + anatomy.uniform(-0.015, 0.015), 0.5 + anatomy.uniform(-0.015, 0.015), 0.08};
    L.base_color = {205.0 + anatomy.uniform(-12, 12), 95.0 + anatomy.uniform(-10, 10), 45.0 + anatomy.uniform(-8, 8)};

    constexpr double kPi = 3.14159265358979323846;
    const std::array<std::array<double, 4>, 6> base = {{
        {150.0, 1.1, 0.55, 0.016},   // superior temporal arcade
        {210.0, -1.1, 0.55, 0.016},  // inferior temporal arcade
        {100.0, 0.5, 0.35, 0.011},
        {260.0, -0.5, 0.35, 0.011},
        {20.0, -0.3, 0.22, 0.010},
        {-25.0, 0.3, 0.22, 0.010},
    }};
    for (const auto& b : base) {
        L.vessels.push_back({(b[0] + anatomy.uniform(-8, 8)) * kPi / 180.0, b[1] + anatomy.uniform(-0.15, 0.15),
                             b[2] * anatomy.uniform(0.9, 1.1), b[3]});
    }

    Rng glare(p.seed ^ 0xD1B54A32D192ED03ull);
    for (int i = 0; i < p.glare_count; ++i) {
        // Uniform over a disc of radius 0.8R by rejection from its bounding square.
        double gx, gy;
        do {
            gx = glare.uniform(-1.0, 1.0);
            gy = glare.uniform(-1.0, 1.0);
        } while (gx * gx + gy * gy > 1.0);
        L.glare.push_back({0.5 + gx * 0.8 * kRetinaRadius, 0.5 + gy * 0.8 * kRetinaRadius, kGlareRadius});
    }
    return L;
}

inline std::vector<std::array<double, 2>> vessel_polyline(const Layout& L, const Vessel& v, int segments = 24) {
    std::vector<std::array<double, 2>> pts;
    const double start = L.disc.r * 0.9;
    for (int i = 0; i <= segments; ++i) {
        const double t = static_cast<double>(i) / segments;
        const double a = v.start_angle + v.curvature * t;
        const double rad = start + v.length * t;
        pts.push_back({L.disc.cx + rad * std::cos(a), L.disc.cy - rad * std::sin(a)});
    }
    return pts;
}

namespace detail {
inline bool inside(const Circle& c, double x, double y) {
    const double dx = x - c.cx, dy = y - c.cy;
    return dx * dx + dy * dy <= c.r * c.r;
}

inline double seg_distance(double px, double py, const std::array<double, 2>& a, const std::array<double, 2>& b) {
    const double vx = b[0] - a[0], vy = b[1] - a[1];
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0 ? ((px - a[0]) * vx + (py - a[1]) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = px - (a[0] + t * vx), dy = py - (a[1] + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

inline double smooth_edge(double dist_px_inside) { return std::clamp(dist_px_inside + 0.5, 0.0, 1.0); }

inline void gaussian_blur(std::vector<double>& plane, int side, double sigma) {
    if (sigma <= 0.0) return;
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) sum += k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (auto& w : k) w /= sum;
    std::vector<double> tmp(plane.size());
    auto idx = [side](int x, int y) { return static_cast<std::size_t>(y) * static_cast<std::size_t>(side) + static_cast<std::size_t>(x); };
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            double acc = 0;
            for (int i = -radius; i <= radius; ++i) acc += k[static_cast<std::size_t>(i + radius)] * plane[idx(std::clamp(x + i, 0, side - 1), y)];
            tmp[idx(x, y)] = acc;
        }
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            double acc = 0;
            for (int i = -radius; i <= radius; ++i) acc += k[static_cast<std::size_t>(i + radius)] * tmp[idx(x, std::clamp(y + i, 0, side - 1))];
            plane[idx(x, y)] = acc;
        }
}
}  // namespace detail

/// Visible fraction of a structure's pixel mask at the given side: pixel
/// centers inside the structure that are inside the aperture and under no glare.
inline double visible_fraction(const Layout& L, const Circle& structure, int side) {
    long long total = 0, visible = 0;
    const Circle aperture{L.retina.cx, L.retina.cy, L.aperture_r};
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            const double u = (x + 0.5) / side, v = (y + 0.5) / side;
            if (!detail::inside(structure, u, v)) continue;
            ++total;
            if (!detail::inside(aperture, u, v)) continue;
            bool glared = false;
            for (const auto& g : L.glare)
                if (detail::inside(g, u, v)) {
                    glared = true;
                    break;
                }
            if (!glared) ++visible;
        }
    return total == 0 ? 0.0 : static_cast<double>(visible) / static_cast<double>(total);
}

inline Fundaq8Sheet ground_truth(const SynthParams& p, const Layout& L, int side) {
    using namespace rules;
    Fundaq8Sheet s;
    s[Attribute::resolution] = blur_level(p.blur_sigma);
    s[Attribute::field_of_view] = coverage_level(p.coverage);
    s[Attribute::color_fidelity] = cast_level(p.color_cast);
    s[Attribute::artifacts] = glare_level(p.glare_count);
    s[Attribute::vessels] = std::min(contrast_level(p.contrast.vessels), blur_level(p.blur_sigma));
    s[Attribute::macula] = std::min(contrast_level(p.contrast.macula), visibility_level(visible_fraction(L, L.macula, side)));
    s[Attribute::optic_disc] = std::min(contrast_level(p.contrast.disc), visibility_level(visible_fraction(L, L.disc, side)));
    s[Attribute::optic_cup] = std::min(contrast_level(p.contrast.cup), visibility_level(visible_fraction(L, L.cup, side)));
    return s;
}

struct Sample {
    ImageBuffer image;
    Fundaq8Sheet sheet;
};

inline Sample synth_generate(const SynthParams& p, int side) {
    validate(p);
    if (side < 8) throw std::invalid_argument("synthetic side must be at least 8");
    const Layout L = make_layout(p);
    const double S = side;
    const std::size_t plane = static_cast<std::size_t>(side) * static_cast<std::size_t>(side);
    std::array<std::vector<double>, 3> ch{std::vector<double>(plane), std::vector<double>(plane), std::vector<double>(plane)};

    std::vector<std::vector<std::array<double, 2>>> lines;
    for (const auto& v : L.vessels) lines.push_back(vessel_polyline(L, v));

    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * static_cast<std::size_t>(side) + static_cast<std::size_t>(x);
            const double u = (x + 0.5) / S, v = (y + 0.5) / S;
            const double dr = std::hypot(u - L.retina.cx, v - L.retina.cy);
            const double in_retina = detail::smooth_edge((L.retina.r - dr) * S);
            if (in_retina <= 0.0) continue;

            const double shade = 1.0 - 0.35 * (dr / L.retina.r) * (dr / L.retina.r);
            std::array<double, 3> c = {L.base_color[0] * shade, L.base_color[1] * shade, L.base_color[2] * shade};

            // Macula: darker pigment with a soft rim.
            const double dm = std::hypot(u - L.macula.cx, v - L.macula.cy);
            const double wm = detail::smooth_edge((L.macula.r - dm) * S) * (1.0 - 0.5 * dm / L.macula.r);
            const double mdark = 1.0 - 0.55 * p.contrast.macula * std::max(0.0, wm);
            for (auto& k : c) k *= mdark;

            // Optic disc and cup: blends toward pale yellow and near white.
            const double dd = std::hypot(u - L.disc.cx, v - L.disc.cy);
            const double wd = p.contrast.disc * detail::smooth_edge((L.disc.r - dd) * S);
            const std::array<double, 3> disc_col = {250, 200, 130};
            for (std::size_t k = 0; k < 3; ++k) c[k] += (disc_col[k] - c[k]) * wd;
            const double wc = p.contrast.cup * detail::smooth_edge((L.cup.r - dd) * S);
            const std::array<double, 3> cup_col = {255, 250, 225};
            for (std::size_t k = 0; k < 3; ++k) c[k] += (cup_col[k] - c[k]) * wc;

            // Vessels.
            double vmax = 0.0;
            for (std::size_t j = 0; j < lines.size(); ++j) {
                const double hw = std::max(0.6, L.vessels[j].width * S * 0.5);
                double d = 1e9;
                const auto& pl = lines[j];
                for (std::size_t s = 0; s + 1 < pl.size(); ++s) d = std::min(d, detail::seg_distance(u, v, pl[s], pl[s + 1]) * S);
                const double w = std::max(0.0, 1.0 - (d / (hw + 0.5)) * (d / (hw + 0.5)));
                vmax = std::max(vmax, w);
            }
            const std::array<double, 3> vessel_col = {95, 20, 15};
            const double wv = 0.85 * p.contrast.vessels * vmax;
            for (std::size_t k = 0; k < 3; ++k) c[k] += (vessel_col[k] - c[k]) * wv;

            // Color cast toward a desaturated cyan at the pixel's luminance.
            const double lum = 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2];
            const std::array<double, 3> cast = {0.35 * lum, 1.1 * lum, 1.45 * lum};
            for (std::size_t k = 0; k < 3; ++k) c[k] += (cast[k] - c[k]) * p.color_cast;

            // Glare spots.
            double g = 0.0;
            for (const auto& spot : L.glare) {
                const double ds = std::hypot(u - spot.cx, v - spot.cy);
                g = std::max(g, detail::smooth_edge((spot.r - ds) * S));
            }
            const std::array<double, 3> glare_col = {255, 255, 240};
            for (std::size_t k = 0; k < 3; ++k) c[k] += (glare_col[k] - c[k]) * g;

            for (std::size_t k = 0; k < 3; ++k) ch[k][i] = c[k] * in_retina;
        }
    }

    for (auto& plane_values : ch) detail::gaussian_blur(plane_values, side, p.blur_sigma);

    ImageBuffer img(side, side);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            const double u = (x + 0.5) / S, v = (y + 0.5) / S;
            const double da = std::hypot(u - L.retina.cx, v - L.retina.cy);
            const double a = detail::smooth_edge((L.aperture_r - da) * S);
            const std::size_t i = static_cast<std::size_t>(y) * static_cast<std::size_t>(side) + static_cast<std::size_t>(x);
            auto q = [&](double val) { return static_cast<std::uint8_t>(std::clamp(std::round(val * a), 0.0, 255.0)); };
            img.at(x, y) = {q(ch[0][i]), q(ch[1][i]), q(ch[2][i])};
        }

    return {std::move(img), ground_truth(p, L, side)};
}

/// Random degradation mix used to build synthetic training sets.
///
/// A per-image latent quality q ~ U(0,1) drives every attribute: each draws a
/// target level from q plus independent noise, then a parameter value from
/// that level's band. Bands stay clear of the rule thresholds so the
/// ground-truth levels are visually separable.
inline SynthParams sample_params(Rng& rng) {
    const double q = rng.uniform();
    auto level = [&]() {
        const double u = q + 0.3 * rng.normal();
        return u < 1.0 / 3.0 ? 0 : u < 2.0 / 3.0 ? 1 : 2;
    };
    auto band = [&](int lvl, std::array<std::array<double, 2>, 3> bands) {
        const auto& b = bands[static_cast<std::size_t>(lvl)];
        return rng.uniform(b[0], b[1]);
    };
    SynthParams p;
    p.blur_sigma = band(level(), {{{3.4, 5.0}, {1.4, 2.4}, {0.0, 0.6}}});
    p.coverage = band(level(), {{{0.25, 0.5}, {0.64, 0.8}, {0.9, 1.0}}});
    p.color_cast = band(level(), {{{0.6, 0.9}, {0.26, 0.42}, {0.0, 0.12}}});
    const int glare = level();
    p.glare_count = glare == 2 ? 0 : glare == 1 ? 1 + static_cast<int>(rng.below(2)) : 4 + static_cast<int>(rng.below(5));
    const std::array<std::array<double, 2>, 3> contrast_bands = {{{0.05, 0.2}, {0.36, 0.52}, {0.7, 1.0}}};
    p.contrast.vessels = band(level(), contrast_bands);
    p.contrast.macula = band(level(), contrast_bands);
    p.contrast.disc = band(level(), contrast_bands);
    p.contrast.cup = band(level(), contrast_bands);
    p.seed = rng.next_u64();
    return p;
}

}  // namespace fundaq::synth
