#pragma once

#include <cstdint>
#include <vector>

#include "sodsynth/errors.hpp"

namespace sodsynth {

/// Interleaved RGB image, values in [0,1].
struct RgbImage {
    int height = 0;
    int width = 0;
    std::vector<double> values; // h*w*3, row-major, channel-interleaved

    RgbImage() = default;
    RgbImage(int h, int w, double fill = 0.0)
        : height(h), width(w), values(static_cast<std::size_t>(h) * w * 3, fill) {}

    double& at(int r, int c, int ch) {
        return values[(static_cast<std::size_t>(r) * width + c) * 3 + ch];
    }
    double at(int r, int c, int ch) const {
        return values[(static_cast<std::size_t>(r) * width + c) * 3 + ch];
    }
    std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
    bool same_dims(int h, int w) const { return height == h && width == w; }
};

/// Single-channel image, values in [0,1].
struct GrayImage {
    int height = 0;
    int width = 0;
    std::vector<double> values;

    GrayImage() = default;
    GrayImage(int h, int w, double fill = 0.0)
        : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

    double& at(int r, int c) { return values[static_cast<std::size_t>(r) * width + c]; }
    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }
    std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
};

/// CIELAB image. L in [0,100] for valid sRGB inputs, a/b unbounded.
struct LabImage {
    int height = 0;
    int width = 0;
    std::vector<double> values; // h*w*3 (L,a,b interleaved)

    LabImage() = default;
    LabImage(int h, int w) : height(h), width(w), values(static_cast<std::size_t>(h) * w * 3, 0.0) {}

    double& at(int r, int c, int ch) {
        return values[(static_cast<std::size_t>(r) * width + c) * 3 + ch];
    }
    double at(int r, int c, int ch) const {
        return values[(static_cast<std::size_t>(r) * width + c) * 3 + ch];
    }
};

/// Strictly binary mask.
struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> values; // 0 or 1

    BinaryMask() = default;
    BinaryMask(int h, int w, std::uint8_t fill = 0)
        : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

    std::uint8_t& at(int r, int c) { return values[static_cast<std::size_t>(r) * width + c]; }
    std::uint8_t at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }
    bool in_bounds(int r, int c) const { return r >= 0 && r < height && c >= 0 && c < width; }
    std::size_t count() const {
        std::size_t n = 0;
        for (auto v : values) n += v;
        return n;
    }
    bool empty_mask() const { return count() == 0; }
};

struct Pixel {
    int row = 0;
    int col = 0;
    bool operator==(const Pixel&) const = default;
};

enum class FlipMode { Horizontal, Vertical, Both };

/// Standard sRGB (D65) to CIELAB.
LabImage srgb_to_lab(const RgbImage& img);

/// Zhang-Suen thinning to an 8-connected, one-pixel-wide skeleton.
/// The result is a subset of the input; component connectivity is preserved.
BinaryMask skeletonize(const BinaryMask& mask);

/// Separable Gaussian blur, kernel radius ceil(3*sigma), replicate padding.
GrayImage gaussian_blur(const GrayImage& img, double sigma);
RgbImage gaussian_blur(const RgbImage& img, double sigma);

RgbImage flip(const RgbImage& img, FlipMode mode);
GrayImage flip(const GrayImage& img, FlipMode mode);
BinaryMask flip(const BinaryMask& mask, FlipMode mode);

/// Quarter-turn rotations (square images), counterclockwise in 90° steps.
RgbImage rotate90(const RgbImage& img, int quarter_turns);
GrayImage rotate90(const GrayImage& img, int quarter_turns);
BinaryMask rotate90(const BinaryMask& mask, int quarter_turns);

/// Summed per-channel Lab variance inside the window around center
/// (window clipped at the borders).
double local_patch_variance(const LabImage& lab, Pixel center, int window = 15);

/// Mean squared Lab difference between two aligned windows; offsets where
/// either window leaves the image are skipped. Lower means more similar.
double patch_similarity(const LabImage& lab, Pixel center_a, Pixel center_b, int window = 15);

} // namespace sodsynth
