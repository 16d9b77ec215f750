#include "sodsynth/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sodsynth/png_io.hpp"
#include "sodsynth/rng.hpp"

namespace sodsynth {

namespace {

std::vector<Pixel> mask_points(const BinaryMask& m) {
    std::vector<Pixel> pts;
    for (int r = 0; r < m.height; ++r)
        for (int c = 0; c < m.width; ++c)
            if (m.at(r, c)) pts.push_back({r, c});
    return pts;
}

double euclid(Pixel a, Pixel b) {
    const double dr = a.row - b.row, dc = a.col - b.col;
    return std::sqrt(dr * dr + dc * dc);
}

// digital segment between two pixels
std::vector<Pixel> bresenham(Pixel from, Pixel to) {
    std::vector<Pixel> pts;
    int r0 = from.row, c0 = from.col;
    const int r1 = to.row, c1 = to.col;
    const int dc = std::abs(c1 - c0), dr = -std::abs(r1 - r0);
    const int sc = c0 < c1 ? 1 : -1, sr = r0 < r1 ? 1 : -1;
    int err = dc + dr;
    while (true) {
        pts.push_back({r0, c0});
        if (r0 == r1 && c0 == c1) break;
        const int e2 = 2 * err;
        if (e2 >= dr) {
            err += dr;
            c0 += sc;
        }
        if (e2 <= dc) {
            err += dc;
            r0 += sr;
        }
    }
    return pts;
}

double open_uniform(std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    double v = dist(rng);
    // keep strictly inside the open interval
    const double nudge = 1e-12 * std::max(1.0, std::fabs(hi - lo));
    return std::clamp(v, lo + nudge, hi - nudge);
}

} // namespace

// -------------------------------------------------------------------------
// endpoint selection
// -------------------------------------------------------------------------

EndpointPair select_endpoints(const ScribbleLabel& label, const LabImage& lab, int strategy,
                              std::mt19937_64& rng, const SynthConfig& config) {
    if (strategy < 1 || strategy > 3)
        throw ParameterError("select_endpoints: strategy must be 1, 2 or 3");
    const BinaryMask fg_skel = skeletonize(label.foreground_mask());
    const BinaryMask bg_skel = skeletonize(label.background_mask());
    const auto fg_pts = mask_points(fg_skel);
    const auto bg_pts = mask_points(bg_skel);
    if (fg_pts.empty()) throw GenerationError("select_endpoints: empty foreground skeleton");
    if (bg_pts.empty()) throw GenerationError("select_endpoints: empty background skeleton");

    Pixel fg{}, bg{};
    switch (strategy) {
        case 1: {
            // closest pair, ties resolved by row-major order of fg then bg
            double best = std::numeric_limits<double>::infinity();
            for (const auto& f : fg_pts) {
                for (const auto& b : bg_pts) {
                    const double d = euclid(f, b);
                    if (d < best) {
                        best = d;
                        fg = f;
                        bg = b;
                    }
                }
            }
            break;
        }
        case 2: {
            // most self-similar background neighborhood = minimum summed
            // Lab variance in the local window
            double best = std::numeric_limits<double>::infinity();
            for (const auto& b : bg_pts) {
                const double v = local_patch_variance(lab, b, config.patch_window);
                if (v < best) {
                    best = v;
                    bg = b;
                }
            }
            std::uniform_int_distribution<std::size_t> pick(0, fg_pts.size() - 1);
            fg = fg_pts[pick(rng)];
            break;
        }
        case 3: {
            std::uniform_int_distribution<std::size_t> pick_fg(0, fg_pts.size() - 1);
            std::uniform_int_distribution<std::size_t> pick_bg(0, bg_pts.size() - 1);
            fg = fg_pts[pick_fg(rng)];
            bg = bg_pts[pick_bg(rng)];
            break;
        }
    }

    if (strategy == 1 || strategy == 3) {
        // refine bg to the candidate whose window looks most like the window
        // around fg, within 1.5x the original separation
        const double limit = 1.5 * euclid(fg, bg);
        double best = std::numeric_limits<double>::infinity();
        Pixel refined = bg;
        for (const auto& b : bg_pts) {
            if (euclid(fg, b) > limit) continue;
            const double s = patch_similarity(lab, fg, b, config.patch_window);
            if (s < best) {
                best = s;
                refined = b;
            }
        }
        bg = refined;
    }

    // line rule: walking the digital segment from bg to fg, the first
    // foreground skeleton point and the last background skeleton point
    // before it bound a label-free interior
    const auto segment = bresenham(bg, fg);
    Pixel last_bg = bg;
    for (const auto& p : segment) {
        if (fg_skel.at(p.row, p.col)) {
            fg = p;
            break;
        }
        if (bg_skel.at(p.row, p.col)) last_bg = p;
    }
    bg = last_bg;

    if (fg == bg) throw GenerationError("select_endpoints: degenerate endpoint pair");
    return EndpointPair{fg, bg, strategy};
}

// -------------------------------------------------------------------------
// path generation
// -------------------------------------------------------------------------

PathSkeleton generate_path(Pixel b, Pixel a) {
    if (a == b) throw ParameterError("generate_path: endpoints coincide");
    PathSkeleton path;
    Pixel cur = b;
    path.points.push_back(cur);
    while (!(cur == a)) {
        const int dr = a.row - cur.row, dc = a.col - cur.col;
        const int sr = (dr > 0) - (dr < 0), sc = (dc > 0) - (dc < 0);
        if (dr != 0 && dc != 0) {
            cur.row += sr;
            cur.col += sc;
        } else if (dr != 0) {
            cur.row += sr;
        } else {
            cur.col += sc;
        }
        path.points.push_back(cur);
    }
    return path;
}

// -------------------------------------------------------------------------
// window half-extent
// -------------------------------------------------------------------------

double halfwidth(int n, int path_length, int k, double beta1, double beta2) {
    if (path_length < 1 || n < 0 || n >= path_length)
        throw ParameterError("halfwidth: need 0 <= n < path length");
    if (k < 10 || k > 15)
        throw ParameterError("halfwidth: k must lie in [10, 15], got " + std::to_string(k));
    if (beta1 <= -1.0 || beta1 >= 1.0)
        throw ParameterError("halfwidth: beta1 must lie in (-1, 1)");
    if (beta2 <= 1.0 || beta2 >= 2.0)
        throw ParameterError("halfwidth: beta2 must lie in (1, 2)");
    const double t = static_cast<double>(n) / path_length;
    return 0.5 * k * (1.0 + beta1 * t * std::sin(beta2 * t * M_PI));
}

// -------------------------------------------------------------------------
// region expansion
// -------------------------------------------------------------------------

ConcaveRegion expand_path(const PathSkeleton& path, const ScribbleLabel& label, int k,
                          std::mt19937_64& rng, const SynthConfig& config) {
    const CornerShape ul{open_uniform(rng, config.beta1_min, config.beta1_max),
                         open_uniform(rng, config.beta2_min, config.beta2_max)};
    const CornerShape lr{open_uniform(rng, config.beta1_min, config.beta1_max),
                         open_uniform(rng, config.beta2_min, config.beta2_max)};
    return expand_path(path, label, k, ul, lr);
}

ConcaveRegion expand_path(const PathSkeleton& path, const ScribbleLabel& label, int k,
                          CornerShape upper_left, CornerShape lower_right) {
    if (path.points.empty()) throw ParameterError("expand_path: empty path");

    ConcaveRegion region;
    region.path = path;
    region.k = k;
    region.upper_left = upper_left;
    region.lower_right = lower_right;

    const int h = label.height, w = label.width;
    region.mask = BinaryMask(h, w);
    const int n_points = path.length();
    for (int n = 0; n < n_points; ++n) {
        const double d_ul = halfwidth(n, n_points, k, region.upper_left.beta1,
                                      region.upper_left.beta2);
        const double d_lr = halfwidth(n, n_points, k, region.lower_right.beta1,
                                      region.lower_right.beta2);
        const int o_ul = static_cast<int>(std::floor(d_ul + 0.5)); // round half up
        const int o_lr = static_cast<int>(std::floor(d_lr + 0.5));
        const Pixel p = path.points[static_cast<std::size_t>(n)];
        const int r0 = std::max(0, p.row - o_ul), r1 = std::min(h - 1, p.row + o_lr);
        const int c0 = std::max(0, p.col - o_ul), c1 = std::min(w - 1, p.col + o_lr);
        for (int r = r0; r <= r1; ++r)
            for (int c = c0; c <= c1; ++c) region.mask.at(r, c) = 1;
    }

    // remove the intersection with the (foreground and background) scribbles
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (label.at(r, c) != PixelState::Unknown) region.mask.at(r, c) = 0;

    if (region.mask.empty_mask())
        throw GenerationError("expand_path: scribble subtraction left an empty region");

    // the region has to stay attached to its path
    bool touches = false;
    for (const auto& p : path.points) {
        for (int dr = -1; dr <= 1 && !touches; ++dr)
            for (int dc = -1; dc <= 1; ++dc) {
                const int r = p.row + dr, c = p.col + dc;
                if (region.mask.in_bounds(r, c) && region.mask.at(r, c)) {
                    touches = true;
                    break;
                }
            }
        if (touches) break;
    }
    if (!touches) throw GenerationError("expand_path: region detached from its path");
    return region;
}

// -------------------------------------------------------------------------
// texture
// -------------------------------------------------------------------------

namespace {

// reflect an offset into [0, m) with period 2m (edge pixels duplicated)
inline int mirror_index(int i, int m) {
    const int period = 2 * m;
    int t = i % period;
    if (t < 0) t += period;
    return t < m ? t : period - 1 - t;
}

} // namespace

RgbImage generate_texture(const RgbImage& img, Pixel bg_point, int out_h, int out_w,
                          int patch_window) {
    if (out_h < 1 || out_w < 1) throw ParameterError("generate_texture: output dims must be >= 1");
    if (patch_window < 1 || patch_window % 2 == 0)
        throw ParameterError("generate_texture: patch window must be odd");
    const int radius = patch_window / 2;
    const int p0r = bg_point.row - radius;
    const int p0c = bg_point.col - radius;

    // patch clipped at the borders, then edge-replicated back to full size
    RgbImage patch(patch_window, patch_window);
    for (int i = 0; i < patch_window; ++i) {
        const int sr = std::clamp(p0r + i, 0, img.height - 1);
        for (int j = 0; j < patch_window; ++j) {
            const int sc = std::clamp(p0c + j, 0, img.width - 1);
            for (int ch = 0; ch < 3; ++ch) patch.at(i, j, ch) = img.at(sr, sc, ch);
        }
    }

    // mirror tiling, phase-anchored at the patch origin so the tile holding
    // bg_point reproduces the original image patch in place
    RgbImage texture(out_h, out_w);
    for (int r = 0; r < out_h; ++r) {
        const int i = mirror_index(r - p0r, patch_window);
        for (int c = 0; c < out_w; ++c) {
            const int j = mirror_index(c - p0c, patch_window);
            for (int ch = 0; ch < 3; ++ch) texture.at(r, c, ch) = patch.at(i, j, ch);
        }
    }
    return texture;
}

// -------------------------------------------------------------------------
// feathered composition
// -------------------------------------------------------------------------

RgbImage feather_and_compose(const RgbImage& img, const ConcaveRegion& region,
                             const RgbImage& texture, double sigma) {
    if (!texture.same_dims(img.height, img.width))
        throw DimensionError("feather_and_compose: texture dims must match image");
    if (region.mask.height != img.height || region.mask.width != img.width)
        throw DimensionError("feather_and_compose: mask dims must match image");

    GrayImage alpha(img.height, img.width);
    for (std::size_t i = 0; i < alpha.values.size(); ++i)
        alpha.values[i] = region.mask.values[i] ? 1.0 : 0.0;
    if (sigma > 0) alpha = gaussian_blur(alpha, sigma);
    for (auto& a : alpha.values) {
        if (a < 1e-12) a = 0.0;
        if (a > 1.0) a = 1.0;
    }

    RgbImage out(img.height, img.width);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            const double a = alpha.at(r, c);
            for (int ch = 0; ch < 3; ++ch)
                out.at(r, c, ch) = a * texture.at(r, c, ch) + (1.0 - a) * img.at(r, c, ch);
        }
    }
    return out;
}

// -------------------------------------------------------------------------
// full pipeline
// -------------------------------------------------------------------------

SyntheticSample synthesize(const Sample& sample, const SynthConfig& config, std::uint64_t seed) {
    if (sample.label.foreground_count() == 0 || sample.label.background_count() == 0)
        throw GenerationError("synthesize('" + sample.id + "'): sample needs foreground and background scribbles");

    auto rng = std::mt19937_64(mix64(seed, rng_tag::kSynthesis));
    const LabImage lab = srgb_to_lab(sample.image);

    const double w_total = config.strategy_weights[0] + config.strategy_weights[1] +
                           config.strategy_weights[2];
    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt < config.max_retries; ++attempt) {
        try {
            std::uniform_real_distribution<double> uni(0.0, 1.0);
            const double pick = uni(rng) * w_total;
            const int strategy = pick < config.strategy_weights[0]
                                     ? 1
                                     : (pick < config.strategy_weights[0] +
                                                    config.strategy_weights[1]
                                            ? 2
                                            : 3);

            const EndpointPair endpoints = select_endpoints(sample.label, lab, strategy, rng,
                                                            config);
            const PathSkeleton path = generate_path(endpoints.bg, endpoints.fg);
            std::uniform_int_distribution<int> pick_k(config.k_min, config.k_max);
            const int k = pick_k(rng);
            const ConcaveRegion region = expand_path(path, sample.label, k, rng, config);

            const RgbImage texture = generate_texture(sample.image, endpoints.bg,
                                                      sample.image.height, sample.image.width,
                                                      config.patch_window);
            const double sigma =
                open_uniform(rng, config.feather_sigma_min, config.feather_sigma_max);
            RgbImage composed = feather_and_compose(sample.image, region, texture, sigma);

            ScribbleLabel synth_label = sample.label;
            for (int r = 0; r < synth_label.height; ++r)
                for (int c = 0; c < synth_label.width; ++c)
                    if (region.mask.at(r, c)) synth_label.at(r, c) = PixelState::Background;

            SyntheticSample synth;
            synth.base_id = sample.id;
            synth.image = std::move(composed);
            synth.label = std::move(synth_label);
            synth.concave_mask = region.mask;
            synth.strategy = strategy;
            synth.k = k;
            synth.upper_left = region.upper_left;
            synth.lower_right = region.lower_right;
            synth.feather_sigma = sigma;
            synth.endpoint_fg = endpoints.fg;
            synth.endpoint_bg = endpoints.bg;
            synth.seed = seed;

            const auto violations = validate_synthetic(sample, synth);
            if (!violations.empty()) {
                last_error = violations.front();
                continue;
            }
            return synth;
        } catch (const GenerationError& e) {
            last_error = e.what();
        }
    }
    throw GenerationError("synthesize('" + sample.id + "'): no valid region after " +
                          std::to_string(config.max_retries) + " attempts (last: " + last_error +
                          ")");
}

std::vector<std::string> validate_synthetic(const Sample& base, const SyntheticSample& synth) {
    std::vector<std::string> violations;
    const auto& mask = synth.concave_mask;
    const int h = base.image.height, w = base.image.width;

    if (mask.height != h || mask.width != w) {
        violations.push_back("concave mask dimensions differ from base image");
        return violations;
    }
    if (mask.empty_mask()) violations.push_back("concave mask is empty");

    bool overlap_scribble = false, label_mismatch = false, mask_not_bg = false;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (mask.at(r, c)) {
                if (base.label.at(r, c) != PixelState::Unknown) overlap_scribble = true;
                if (synth.label.at(r, c) != PixelState::Background) mask_not_bg = true;
            } else if (synth.label.at(r, c) != base.label.at(r, c)) {
                label_mismatch = true;
            }
        }
    }
    if (overlap_scribble) violations.push_back("concave mask overlaps scribble-labeled pixels");
    if (mask_not_bg) violations.push_back("concave mask pixels not labeled Background");
    if (label_mismatch) violations.push_back("label differs from base outside the concave mask");

    // image equality outside the feather support
    GrayImage alpha(h, w);
    for (std::size_t i = 0; i < alpha.values.size(); ++i)
        alpha.values[i] = mask.values[i] ? 1.0 : 0.0;
    if (synth.feather_sigma > 0) alpha = gaussian_blur(alpha, synth.feather_sigma);
    bool touched_outside = false;
    for (int r = 0; r < h && !touched_outside; ++r)
        for (int c = 0; c < w; ++c) {
            if (alpha.at(r, c) >= 1e-12) continue;
            for (int ch = 0; ch < 3; ++ch)
                if (synth.image.at(r, c, ch) != base.image.at(r, c, ch)) {
                    touched_outside = true;
                    break;
                }
            if (touched_outside) break;
        }
    if (touched_outside)
        violations.push_back("image modified outside the feathered concave region");

    // 8-adjacency to a foreground scribble pixel
    bool adjacent = false;
    for (int r = 0; r < h && !adjacent; ++r)
        for (int c = 0; c < w && !adjacent; ++c) {
            if (!mask.at(r, c)) continue;
            for (int dr = -1; dr <= 1 && !adjacent; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    const int nr = r + dr, nc = c + dc;
                    if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
                    if (base.label.at(nr, nc) == PixelState::Foreground) {
                        adjacent = true;
                        break;
                    }
                }
        }
    if (!adjacent) violations.push_back("concave mask not adjacent to any foreground scribble");

    return violations;
}

// -------------------------------------------------------------------------
// provenance records
// -------------------------------------------------------------------------

void save_synth_meta(const SyntheticSample& synth, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.precision(17);
    out << "base_id " << synth.base_id << "\n"
        << "strategy " << synth.strategy << "\n"
        << "k " << synth.k << "\n"
        << "beta1_ul " << synth.upper_left.beta1 << "\n"
        << "beta2_ul " << synth.upper_left.beta2 << "\n"
        << "beta1_lr " << synth.lower_right.beta1 << "\n"
        << "beta2_lr " << synth.lower_right.beta2 << "\n"
        << "feather_sigma " << synth.feather_sigma << "\n"
        << "endpoint_fg " << synth.endpoint_fg.row << " " << synth.endpoint_fg.col << "\n"
        << "endpoint_bg " << synth.endpoint_bg.row << " " << synth.endpoint_bg.col << "\n"
        << "seed " << synth.seed << "\n";
    if (!out) throw IoError("failed writing '" + path + "'");
}

SyntheticSample load_synthetic_variant(const std::string& image_path) {
    namespace fs = std::filesystem;
    const fs::path img(image_path);
    const std::string stem = img.stem().string();
    const fs::path dir = img.parent_path();
    SyntheticSample synth = load_synth_meta((dir / (stem + "_meta.txt")).string());
    synth.image = load_png_rgb(image_path);
    synth.label = load_scribble((dir / (stem + "_label.png")).string());
    GrayImage mask = load_png_gray((dir / (stem + "_mask.png")).string());
    synth.concave_mask = BinaryMask(mask.height, mask.width);
    for (std::size_t i = 0; i < mask.values.size(); ++i)
        synth.concave_mask.values[i] = mask.values[i] > 0.5;
    return synth;
}

std::vector<std::string> validate_manifest_synthetics(const std::string& manifest_path) {
    std::vector<std::string> violations;
    for (const auto& loaded : load_dataset(manifest_path)) {
        for (const auto& variant_path : loaded.synthetic_paths) {
            const SyntheticSample synth = load_synthetic_variant(variant_path);
            for (const auto& issue : validate_synthetic(loaded.sample, synth))
                violations.push_back(loaded.sample.id + " (" + variant_path + "): " + issue);
        }
    }
    return violations;
}

SyntheticSample load_synth_meta(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    SyntheticSample synth;
    std::string key;
    while (in >> key) {
        if (key == "base_id")
            in >> synth.base_id;
        else if (key == "strategy")
            in >> synth.strategy;
        else if (key == "k")
            in >> synth.k;
        else if (key == "beta1_ul")
            in >> synth.upper_left.beta1;
        else if (key == "beta2_ul")
            in >> synth.upper_left.beta2;
        else if (key == "beta1_lr")
            in >> synth.lower_right.beta1;
        else if (key == "beta2_lr")
            in >> synth.lower_right.beta2;
        else if (key == "feather_sigma")
            in >> synth.feather_sigma;
        else if (key == "endpoint_fg")
            in >> synth.endpoint_fg.row >> synth.endpoint_fg.col;
        else if (key == "endpoint_bg")
            in >> synth.endpoint_bg.row >> synth.endpoint_bg.col;
        else if (key == "seed")
            in >> synth.seed;
        else
            throw FormatError("unknown key '" + key + "' in '" + path + "'");
    }
    return synth;
}

} // namespace sodsynth
