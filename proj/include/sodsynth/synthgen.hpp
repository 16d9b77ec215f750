#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sodsynth/dataset.hpp"
#include "sodsynth/image.hpp"
#include "sodsynth/scribble.hpp"

namespace sodsynth {

struct EndpointPair {
    Pixel fg; // A, on the foreground scribble skeleton
    Pixel bg; // B, on the background scribble skeleton
    int strategy = 0;
};

/// 8-connected pixel path from B to A, one step per pixel.
/// length == Chebyshev(B, A) + 1.
struct PathSkeleton {
    std::vector<Pixel> points;
    int length() const { return static_cast<int>(points.size()); }
};

struct CornerShape {
    double beta1 = 0.0; // in (-1, 1)
    double beta2 = 1.5; // in (1, 2)
};

struct ConcaveRegion {
    BinaryMask mask;
    PathSkeleton path;
    int k = 12;
    CornerShape upper_left;
    CornerShape lower_right;
};

struct SynthConfig {
    int k_min = 10;
    int k_max = 15;
    double beta1_min = -1.0, beta1_max = 1.0; // open interval, sampled strictly inside
    double beta2_min = 1.0, beta2_max = 2.0;
    int patch_window = 15;
    int n_variants = 10;
    double feather_sigma_min = 1.0, feather_sigma_max = 3.0;
    double strategy_weights[3] = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    int max_retries = 20;
};

struct SyntheticSample {
    std::string base_id;
    RgbImage image;
    ScribbleLabel label;       // base label with the concave region forced to Background
    BinaryMask concave_mask;
    int strategy = 0;
    int k = 12;
    CornerShape upper_left, lower_right;
    double feather_sigma = 0.0;
    Pixel endpoint_fg, endpoint_bg;
    std::uint64_t seed = 0;
};

/// Picks the endpoints per strategy 1/2/3, applies the background-point
/// refinement for strategies 1 and 3, and finally the line rule (labeled
/// skeleton points on the digital segment replace the endpoints).
EndpointPair select_endpoints(const ScribbleLabel& label, const LabImage& lab, int strategy,
                              std::mt19937_64& rng, const SynthConfig& config = {});

/// Greedy walk from B to A: diagonal step while both deltas are nonzero,
/// then the remaining axis step.
PathSkeleton generate_path(Pixel b, Pixel a);

/// Window half-extent at path position n of N:
/// d = (k/2) * (1 + beta1*(n/N)*sin(beta2*(n/N)*pi)); 0 < d < k on the
/// stated parameter ranges.
double halfwidth(int n, int path_length, int k, double beta1, double beta2);

/// Slides the per-point window along the path (independent shape draws for
/// the upper-left and lower-right corners) and removes every labeled pixel.
ConcaveRegion expand_path(const PathSkeleton& path, const ScribbleLabel& label, int k,
                          std::mt19937_64& rng, const SynthConfig& config = {});

/// Same, with the corner shapes supplied by the caller.
ConcaveRegion expand_path(const PathSkeleton& path, const ScribbleLabel& label, int k,
                          CornerShape upper_left, CornerShape lower_right);

/// Mirror-tiled texture from the patch_window x patch_window patch around
/// bg_point, phase-anchored so the tile containing bg_point reproduces the
/// original patch at its original image position.
RgbImage generate_texture(const RgbImage& img, Pixel bg_point, int out_h, int out_w,
                          int patch_window = 15);

/// alpha = blur(mask, sigma); out = alpha*texture + (1-alpha)*image.
/// sigma <= 0 means a hard paste (alpha == mask). Alpha below 1e-12 is
/// treated as exactly zero so untouched pixels stay bit-identical.
RgbImage feather_and_compose(const RgbImage& img, const ConcaveRegion& region,
                             const RgbImage& texture, double sigma);

/// Full pipeline; deterministic given (sample, config, seed).
SyntheticSample synthesize(const Sample& sample, const SynthConfig& config, std::uint64_t seed);

/// Checks every SyntheticSample invariant against its base sample; returns
/// a list of human-readable violations (empty means valid).
std::vector<std::string> validate_synthetic(const Sample& base, const SyntheticSample& synth);

/// Provenance record round trip (plain text, one file per variant).
void save_synth_meta(const SyntheticSample& synth, const std::string& path);
SyntheticSample load_synth_meta(const std::string& path); // image/label/mask left empty

/// Loads a variant written by the synth command: the image PNG plus its
/// _label.png, _mask.png and _meta.txt siblings.
SyntheticSample load_synthetic_variant(const std::string& image_path);

/// Validation pass over a manifest: every stored variant is checked against
/// its base sample. Returns human-readable violations (empty when valid).
std::vector<std::string> validate_manifest_synthetics(const std::string& manifest_path);

} // namespace sodsynth
