#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fundaq {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Row-major 8-bit RGB raster.
class ImageBuffer {
public:
    ImageBuffer(int width, int height, Rgb fill = {}) : width_(width), height_(height) {
        if (width < 1 || height < 1) throw std::invalid_argument("image dimensions must be positive");
        pixels_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
    }

    int width() const { return width_; }
    int height() const { return height_; }

    Rgb& at(int x, int y) { return pixels_[index(x, y)]; }
    const Rgb& at(int x, int y) const { return pixels_[index(x, y)]; }

    const std::vector<Rgb>& pixels() const { return pixels_; }
    std::vector<Rgb>& pixels() { return pixels_; }

    friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

private:
    std::size_t index(int x, int y) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }

    int width_;
    int height_;
    std::vector<Rgb> pixels_;
};

struct BoundingBox {
    int x0 = 0, y0 = 0, w = 0, h = 0;
    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct NoRetinaFound : std::runtime_error {
    NoRetinaFound() : std::runtime_error("no retina found: no pixel above luminance threshold") {}
};

/// Integer-rounded 0.299R + 0.587G + 0.114B, computed in fixed point so the
/// threshold test never depends on floating rounding.
inline int luma(Rgb p) {
    return (299 * p.r + 587 * p.g + 114 * p.b + 500) / 1000;
}

inline BoundingBox detect_retina_bbox(const ImageBuffer& img, int luma_threshold) {
    int x_min = img.width(), y_min = img.height(), x_max = -1, y_max = -1;
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            if (luma(img.at(x, y)) > luma_threshold) {
                x_min = std::min(x_min, x);
                x_max = std::max(x_max, x);
                y_min = std::min(y_min, y);
                y_max = std::max(y_max, y);
            }
        }
    }
    if (x_max < 0) throw NoRetinaFound();
    return {x_min, y_min, x_max - x_min + 1, y_max - y_min + 1};
}

inline ImageBuffer crop(const ImageBuffer& img, const BoundingBox& box) {
    if (box.w < 1 || box.h < 1 || box.x0 < 0 || box.y0 < 0 || box.x0 + box.w > img.width() ||
        box.y0 + box.h > img.height())
        throw std::out_of_range("crop box outside image");
    ImageBuffer out(box.w, box.h);
    for (int y = 0; y < box.h; ++y)
        for (int x = 0; x < box.w; ++x) out.at(x, y) = img.at(box.x0 + x, box.y0 + y);
    return out;
}

/// Centers the content on a max(w,h) square; an odd remainder puts the extra
/// fill row/column at the bottom/right.
inline ImageBuffer pad_to_square(const ImageBuffer& img, Rgb fill = {}) {
    const int side = std::max(img.width(), img.height());
    if (img.width() == img.height()) return img;
    ImageBuffer out(side, side, fill);
    const int off_x = (side - img.width()) / 2;
    const int off_y = (side - img.height()) / 2;
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) out.at(off_x + x, off_y + y) = img.at(x, y);
    return out;
}

/// Bilinear resampling with half-pixel centers: src = (dst + 0.5) * scale - 0.5,
/// clamped to the edge. Channels rounded half away from zero, clamped to [0,255].
inline ImageBuffer resize_bilinear(const ImageBuffer& img, int side) {
    if (side < 1) throw std::invalid_argument("resize side must be positive");
    if (img.width() == side && img.height() == side) return img;

    struct Tap {
        int i0, i1;
        double t;
    };
    auto taps = [side](int src_len) {
        std::vector<Tap> v(static_cast<std::size_t>(side));
        const double scale = static_cast<double>(src_len) / side;
        for (int d = 0; d < side; ++d) {
            double s = (d + 0.5) * scale - 0.5;
            s = std::clamp(s, 0.0, static_cast<double>(src_len - 1));
            const int i0 = static_cast<int>(std::floor(s));
            const int i1 = std::min(i0 + 1, src_len - 1);
            v[static_cast<std::size_t>(d)] = {i0, i1, s - i0};
        }
        return v;
    };
    const auto tx = taps(img.width());
    const auto ty = taps(img.height());

    ImageBuffer out(side, side);
    for (int y = 0; y < side; ++y) {
        const auto& vy = ty[static_cast<std::size_t>(y)];
        for (int x = 0; x < side; ++x) {
            const auto& vx = tx[static_cast<std::size_t>(x)];
            const Rgb& p00 = img.at(vx.i0, vy.i0);
            const Rgb& p10 = img.at(vx.i1, vy.i0);
            const Rgb& p01 = img.at(vx.i0, vy.i1);
            const Rgb& p11 = img.at(vx.i1, vy.i1);
            auto mix = [&](auto channel) {
                const double top = channel(p00) * (1 - vx.t) + channel(p10) * vx.t;
                const double bot = channel(p01) * (1 - vx.t) + channel(p11) * vx.t;
                const double v = top * (1 - vy.t) + bot * vy.t;
                return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
            };
            out.at(x, y) = {mix([](const Rgb& p) { return double(p.r); }),
                            mix([](const Rgb& p) { return double(p.g); }),
                            mix([](const Rgb& p) { return double(p.b); })};
        }
    }
    return out;
}

struct PreprocessConfig {
    int luma_threshold = 10;
    int side = 512;
    Rgb fill{0, 0, 0};
};

/// Black-border crop, square pad, resize.
inline ImageBuffer preprocess(const ImageBuffer& img, const PreprocessConfig& cfg = {}) {
    const auto box = detect_retina_bbox(img, cfg.luma_threshold);
    return resize_bilinear(pad_to_square(crop(img, box), cfg.fill), cfg.side);
}

struct ChannelNorm {
    std::array<double, 3> mean{0.5, 0.5, 0.5};
    std::array<double, 3> std{0.5, 0.5, 0.5};
};

/// Planar CHW float input for the network.
struct ModelInput {
    int side = 0;
    std::vector<float> values;  // 3 * side * side, channel-major
};

inline ModelInput to_model_input(const ImageBuffer& img, const ChannelNorm& norm = {}) {
    if (img.width() != img.height()) throw std::invalid_argument("model input must be square");
    for (double s : norm.std)
        if (!(s != 0.0)) throw std::invalid_argument("channel std must be non-zero");
    const int side = img.width();
    const std::size_t plane = static_cast<std::size_t>(side) * static_cast<std::size_t>(side);
    ModelInput in{side, std::vector<float>(3 * plane)};
    for (std::size_t i = 0; i < plane; ++i) {
        const Rgb p = img.pixels()[i];
        const std::array<double, 3> ch = {p.r / 255.0, p.g / 255.0, p.b / 255.0};
        for (std::size_t c = 0; c < 3; ++c)
            in.values[c * plane + i] = static_cast<float>((ch[c] - norm.mean[c]) / norm.std[c]);
    }
    return in;
}

}  // namespace fundaq
