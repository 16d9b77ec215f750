#include "sodsynth/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sodsynth {

// -------------------------------------------------------------------------
// color conversion
// -------------------------------------------------------------------------

namespace {

inline double srgb_to_linear(double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

inline double lab_f(double t) {
    constexpr double delta = 6.0 / 29.0;
    return t > delta * delta * delta ? std::cbrt(t)
                                     : t / (3 * delta * delta) + 4.0 / 29.0;
}

} // namespace

LabImage srgb_to_lab(const RgbImage& img) {
    // D65 reference white
    constexpr double xn = 0.95047, yn = 1.0, zn = 1.08883;
    LabImage lab(img.height, img.width);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            const double lr = srgb_to_linear(img.at(r, c, 0));
            const double lg = srgb_to_linear(img.at(r, c, 1));
            const double lb = srgb_to_linear(img.at(r, c, 2));
            const double x = 0.4124564 * lr + 0.3575761 * lg + 0.1804375 * lb;
            const double y = 0.2126729 * lr + 0.7151522 * lg + 0.0721750 * lb;
            const double z = 0.0193339 * lr + 0.1191920 * lg + 0.9503041 * lb;
            const double fx = lab_f(x / xn), fy = lab_f(y / yn), fz = lab_f(z / zn);
            lab.at(r, c, 0) = 116.0 * fy - 16.0;
            lab.at(r, c, 1) = 500.0 * (fx - fy);
            lab.at(r, c, 2) = 200.0 * (fy - fz);
        }
    }
    return lab;
}

// -------------------------------------------------------------------------
// skeletonization
// -------------------------------------------------------------------------

namespace {

// 8-neighborhood in Zhang-Suen order P2..P9 (N, NE, E, SE, S, SW, W, NW).
constexpr int kNbrR[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
constexpr int kNbrC[8] = {0, 1, 1, 1, 0, -1, -1, -1};

inline int neighbor(const BinaryMask& m, int r, int c, int i) {
    const int nr = r + kNbrR[i], nc = c + kNbrC[i];
    return m.in_bounds(nr, nc) ? m.at(nr, nc) : 0;
}

inline int count_neighbors(const BinaryMask& m, int r, int c) {
    int b = 0;
    for (int i = 0; i < 8; ++i) b += neighbor(m, r, c, i);
    return b;
}

// number of 0->1 transitions around the pixel
inline int transitions(const BinaryMask& m, int r, int c) {
    int a = 0;
    for (int i = 0; i < 8; ++i) {
        int cur = neighbor(m, r, c, i);
        int nxt = neighbor(m, r, c, (i + 1) % 8);
        if (cur == 0 && nxt == 1) ++a;
    }
    return a;
}

// 8-connected component count of the set bits in the 3x3 neighborhood of
// (r,c), pixel itself excluded. Used by the 2x2-block cleanup: a pixel can
// be removed without splitting anything iff its neighbors stay connected.
int neighborhood_components(const BinaryMask& m, int r, int c) {
    int bits[8];
    for (int i = 0; i < 8; ++i) bits[i] = neighbor(m, r, c, i);
    int comp = 0;
    bool seen[8] = {};
    // adjacency between neighborhood positions i and j (as pixels)
    auto adjacent = [&](int i, int j) {
        int dr = std::abs(kNbrR[i] - kNbrR[j]);
        int dc = std::abs(kNbrC[i] - kNbrC[j]);
        return std::max(dr, dc) == 1;
    };
    for (int i = 0; i < 8; ++i) {
        if (!bits[i] || seen[i]) continue;
        ++comp;
        int stack[8], top = 0;
        stack[top++] = i;
        seen[i] = true;
        while (top) {
            int u = stack[--top];
            for (int j = 0; j < 8; ++j) {
                if (bits[j] && !seen[j] && adjacent(u, j)) {
                    seen[j] = true;
                    stack[top++] = j;
                }
            }
        }
    }
    return comp;
}

} // namespace

BinaryMask skeletonize(const BinaryMask& mask) {
    BinaryMask skel = mask;
    std::vector<Pixel> to_clear;
    bool changed = true;
    while (changed) {
        changed = false;
        for (int pass = 0; pass < 2; ++pass) {
            to_clear.clear();
            for (int r = 0; r < skel.height; ++r) {
                for (int c = 0; c < skel.width; ++c) {
                    if (!skel.at(r, c)) continue;
                    const int b = count_neighbors(skel, r, c);
                    if (b < 2 || b > 6) continue;
                    if (transitions(skel, r, c) != 1) continue;
                    const int p2 = neighbor(skel, r, c, 0);
                    const int p4 = neighbor(skel, r, c, 2);
                    const int p6 = neighbor(skel, r, c, 4);
                    const int p8 = neighbor(skel, r, c, 6);
                    if (pass == 0) {
                        if (p2 * p4 * p6 != 0 || p4 * p6 * p8 != 0) continue;
                    } else {
                        if (p2 * p4 * p8 != 0 || p2 * p6 * p8 != 0) continue;
                    }
                    to_clear.push_back({r, c});
                }
            }
            if (!to_clear.empty()) changed = true;
            for (const auto& p : to_clear) skel.at(p.row, p.col) = 0;
        }
    }

    // Zhang-Suen can leave residual 2x2 blocks (staircases). Remove pixels
    // from such blocks when deletion keeps the neighborhood connected.
    bool removed = true;
    while (removed) {
        removed = false;
        for (int r = 0; r + 1 < skel.height; ++r) {
            for (int c = 0; c + 1 < skel.width; ++c) {
                if (!(skel.at(r, c) && skel.at(r, c + 1) && skel.at(r + 1, c) &&
                      skel.at(r + 1, c + 1)))
                    continue;
                const Pixel corners[4] = {{r, c}, {r, c + 1}, {r + 1, c}, {r + 1, c + 1}};
                for (const auto& p : corners) {
                    if (count_neighbors(skel, p.row, p.col) >= 2 &&
                        neighborhood_components(skel, p.row, p.col) == 1) {
                        skel.at(p.row, p.col) = 0;
                        removed = true;
                        break;
                    }
                }
            }
        }
    }
    return skel;
}

// -------------------------------------------------------------------------
// blur
// -------------------------------------------------------------------------

namespace {

std::vector<double> gaussian_kernel(double sigma) {
    if (sigma <= 0) throw ParameterError("gaussian_blur: sigma must be > 0");
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        double v = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = v;
        sum += v;
    }
    for (auto& v : k) v /= sum;
    return k;
}

// 1-D pass with replicate padding over one axis of a planar buffer.
void blur_axis(std::vector<double>& data, int height, int width, int channels,
               const std::vector<double>& kernel, bool horizontal) {
    const int radius = (static_cast<int>(kernel.size()) - 1) / 2;
    std::vector<double> out(data.size());
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            for (int ch = 0; ch < channels; ++ch) {
                double acc = 0;
                for (int i = -radius; i <= radius; ++i) {
                    int rr = r, cc = c;
                    if (horizontal)
                        cc = std::clamp(c + i, 0, width - 1);
                    else
                        rr = std::clamp(r + i, 0, height - 1);
                    acc += kernel[static_cast<std::size_t>(i + radius)] *
                           data[(static_cast<std::size_t>(rr) * width + cc) * channels + ch];
                }
                out[(static_cast<std::size_t>(r) * width + c) * channels + ch] = acc;
            }
        }
    }
    data.swap(out);
}

} // namespace

GrayImage gaussian_blur(const GrayImage& img, double sigma) {
    const auto kernel = gaussian_kernel(sigma);
    GrayImage out = img;
    blur_axis(out.values, out.height, out.width, 1, kernel, true);
    blur_axis(out.values, out.height, out.width, 1, kernel, false);
    return out;
}

RgbImage gaussian_blur(const RgbImage& img, double sigma) {
    const auto kernel = gaussian_kernel(sigma);
    RgbImage out = img;
    blur_axis(out.values, out.height, out.width, 3, kernel, true);
    blur_axis(out.values, out.height, out.width, 3, kernel, false);
    return out;
}

// -------------------------------------------------------------------------
// flips / rotations
// -------------------------------------------------------------------------

namespace {

template <typename Img, typename At>
void flip_into(Img& out, const Img& in, FlipMode mode, At&& assign) {
    const bool h = mode == FlipMode::Horizontal || mode == FlipMode::Both;
    const bool v = mode == FlipMode::Vertical || mode == FlipMode::Both;
    for (int r = 0; r < in.height; ++r) {
        const int sr = v ? in.height - 1 - r : r;
        for (int c = 0; c < in.width; ++c) {
            const int sc = h ? in.width - 1 - c : c;
            assign(out, in, r, c, sr, sc);
        }
    }
}

} // namespace

RgbImage flip(const RgbImage& img, FlipMode mode) {
    RgbImage out(img.height, img.width);
    flip_into(out, img, mode, [](RgbImage& o, const RgbImage& i, int r, int c, int sr, int sc) {
        for (int ch = 0; ch < 3; ++ch) o.at(r, c, ch) = i.at(sr, sc, ch);
    });
    return out;
}

GrayImage flip(const GrayImage& img, FlipMode mode) {
    GrayImage out(img.height, img.width);
    flip_into(out, img, mode, [](GrayImage& o, const GrayImage& i, int r, int c, int sr, int sc) {
        o.at(r, c) = i.at(sr, sc);
    });
    return out;
}

BinaryMask flip(const BinaryMask& mask, FlipMode mode) {
    BinaryMask out(mask.height, mask.width);
    flip_into(out, mask, mode, [](BinaryMask& o, const BinaryMask& i, int r, int c, int sr, int sc) {
        o.at(r, c) = i.at(sr, sc);
    });
    return out;
}

namespace {

void check_square(int h, int w) {
    if (h != w)
        throw UsageError("rotate90: only square images are supported, got " +
                         std::to_string(h) + "x" + std::to_string(w));
}

// counterclockwise: out(r,c) = in(c, n-1-r)
template <typename Img, typename Copy>
Img rotate_impl(const Img& in, int quarter_turns, Copy&& copy) {
    check_square(in.height, in.width);
    int q = ((quarter_turns % 4) + 4) % 4;
    Img cur = in;
    const int n = in.height;
    for (int t = 0; t < q; ++t) {
        Img next = cur;
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) copy(next, cur, r, c, c, n - 1 - r);
        cur = next;
    }
    return cur;
}

} // namespace

RgbImage rotate90(const RgbImage& img, int quarter_turns) {
    return rotate_impl(img, quarter_turns,
                       [](RgbImage& o, const RgbImage& i, int r, int c, int sr, int sc) {
                           for (int ch = 0; ch < 3; ++ch) o.at(r, c, ch) = i.at(sr, sc, ch);
                       });
}

GrayImage rotate90(const GrayImage& img, int quarter_turns) {
    return rotate_impl(img, quarter_turns,
                       [](GrayImage& o, const GrayImage& i, int r, int c, int sr, int sc) {
                           o.at(r, c) = i.at(sr, sc);
                       });
}

BinaryMask rotate90(const BinaryMask& mask, int quarter_turns) {
    return rotate_impl(mask, quarter_turns,
                       [](BinaryMask& o, const BinaryMask& i, int r, int c, int sr, int sc) {
                           o.at(r, c) = i.at(sr, sc);
                       });
}

// -------------------------------------------------------------------------
// local window statistics
// -------------------------------------------------------------------------

namespace {

void check_window(int window) {
    if (window < 1 || window % 2 == 0)
        throw ParameterError("window must be odd and positive, got " + std::to_string(window));
}

} // namespace

double local_patch_variance(const LabImage& lab, Pixel center, int window) {
    check_window(window);
    const int radius = window / 2;
    const int r0 = std::max(0, center.row - radius);
    const int r1 = std::min(lab.height - 1, center.row + radius);
    const int c0 = std::max(0, center.col - radius);
    const int c1 = std::min(lab.width - 1, center.col + radius);
    const double n = static_cast<double>(r1 - r0 + 1) * (c1 - c0 + 1);

    double total = 0;
    for (int ch = 0; ch < 3; ++ch) {
        double sum = 0, sum_sq = 0;
        for (int r = r0; r <= r1; ++r) {
            for (int c = c0; c <= c1; ++c) {
                const double v = lab.at(r, c, ch);
                sum += v;
                sum_sq += v * v;
            }
        }
        const double mean = sum / n;
        total += std::max(0.0, sum_sq / n - mean * mean);
    }
    return total;
}

double patch_similarity(const LabImage& lab, Pixel center_a, Pixel center_b, int window) {
    check_window(window);
    const int radius = window / 2;
    double acc = 0;
    std::size_t count = 0;
    for (int dr = -radius; dr <= radius; ++dr) {
        for (int dc = -radius; dc <= radius; ++dc) {
            const int ar = center_a.row + dr, ac = center_a.col + dc;
            const int br = center_b.row + dr, bc = center_b.col + dc;
            if (ar < 0 || ar >= lab.height || ac < 0 || ac >= lab.width) continue;
            if (br < 0 || br >= lab.height || bc < 0 || bc >= lab.width) continue;
            for (int ch = 0; ch < 3; ++ch) {
                const double d = lab.at(ar, ac, ch) - lab.at(br, bc, ch);
                acc += d * d;
            }
            ++count;
        }
    }
    if (count == 0) return 0.0;
    return acc / static_cast<double>(count);
}

} // namespace sodsynth
