// Brute-force transcriptions of the four saliency metrics, used as oracles
// for the library implementations. Written independently: quadrants are
// materialized as copies, statistics computed over flat vectors.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

namespace metric_oracles {

constexpr double kEps = 2.220446049250313e-16;

struct Map {
    int h = 0, w = 0;
    std::vector<double> v;
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * w + c]; }
};

inline double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double mae_ref(const Map& pred, const Map& gt) {
    double s = 0;
    for (std::size_t i = 0; i < pred.v.size(); ++i) s += std::fabs(pred.v[i] - gt.v[i]);
    return s / static_cast<double>(pred.v.size());
}

inline std::vector<double> binarize_adaptive(const Map& pred) {
    double t = std::min(2.0 * mean_of(pred.v), 1.0);
    std::vector<double> b(pred.v.size());
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = pred.v[i] >= t ? 1.0 : 0.0;
    return b;
}

inline double fbeta_ref(const Map& pred, const Map& gt) {
    auto bin = binarize_adaptive(pred);
    double tp = 0, pos = 0, act = 0;
    for (std::size_t i = 0; i < bin.size(); ++i) {
        tp += bin[i] * gt.v[i];
        pos += bin[i];
        act += gt.v[i];
    }
    if (pos == 0) return 0.0;
    double p = tp / pos, r = tp / act;
    if (0.3 * p + r == 0) return 0.0;
    return 1.3 * p * r / (0.3 * p + r);
}

// ---- structure measure ----

inline double object_ref(const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    double x = mean_of(values);
    double var = 0;
    for (double v : values) var += (v - x) * (v - x);
    double sigma = values.size() > 1 ? std::sqrt(var / (static_cast<double>(values.size()) - 1))
                                     : 0.0;
    return 2.0 * x / (x * x + 1.0 + sigma + kEps);
}

inline double ssim_region_ref(const std::vector<double>& p, const std::vector<double>& g) {
    const double n = static_cast<double>(p.size());
    if (p.empty()) return 0.0;
    double x = mean_of(p), y = mean_of(g);
    double vx = 0, vy = 0, vxy = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        vx += (p[i] - x) * (p[i] - x);
        vy += (g[i] - y) * (g[i] - y);
        vxy += (p[i] - x) * (g[i] - y);
    }
    vx /= n - 1 + kEps;
    vy /= n - 1 + kEps;
    vxy /= n - 1 + kEps;
    double alpha = 4 * x * y * vxy;
    double beta = (x * x + y * y) * (vx + vy);
    if (alpha != 0) return alpha / (beta + kEps);
    if (beta == 0) return 1.0;
    return 0.0;
}

inline std::vector<double> crop(const Map& m, int r0, int r1, int c0, int c1) {
    std::vector<double> out;
    for (int r = r0; r < r1; ++r)
        for (int c = c0; c < c1; ++c) out.push_back(m.at(r, c));
    return out;
}

inline double s_measure_ref(const Map& pred, const Map& gt) {
    double y = mean_of(gt.v);
    if (y == 0.0) return 1.0 - mean_of(pred.v);
    if (y == 1.0) return mean_of(pred.v);

    // object part
    std::vector<double> fg_vals, bg_vals;
    for (std::size_t i = 0; i < gt.v.size(); ++i) {
        if (gt.v[i] > 0.5)
            fg_vals.push_back(pred.v[i]);
        else
            bg_vals.push_back(1.0 - pred.v[i]);
    }
    double so = y * object_ref(fg_vals) + (1 - y) * object_ref(bg_vals);

    // region part: 0-based centroid; ceil cut, both cuts averaged on a tie
    double total = 0, mx = 0, my = 0;
    for (int r = 0; r < gt.h; ++r)
        for (int c = 0; c < gt.w; ++c)
            if (gt.at(r, c) > 0.5) {
                total += 1;
                mx += c;
                my += r;
            }
    auto cuts = [](double centroid) {
        std::vector<int> out;
        double r = std::round(centroid);
        if (std::fabs(centroid - r) < 1e-12) {
            out.push_back(static_cast<int>(r));
            out.push_back(static_cast<int>(r) + 1);
        } else {
            out.push_back(static_cast<int>(std::ceil(centroid)));
        }
        return out;
    };
    auto region_score = [&](int cy, int cx) {
        double area = static_cast<double>(gt.h) * gt.w;
        double w1 = cx * cy / area;
        double w2 = (gt.w - cx) * cy / area;
        double w3 = cx * (gt.h - cy) / area;
        double w4 = 1.0 - w1 - w2 - w3;
        return w1 * ssim_region_ref(crop(pred, 0, cy, 0, cx), crop(gt, 0, cy, 0, cx)) +
               w2 * ssim_region_ref(crop(pred, 0, cy, cx, gt.w), crop(gt, 0, cy, cx, gt.w)) +
               w3 * ssim_region_ref(crop(pred, cy, gt.h, 0, cx), crop(gt, cy, gt.h, 0, cx)) +
               w4 * ssim_region_ref(crop(pred, cy, gt.h, cx, gt.w), crop(gt, cy, gt.h, cx, gt.w));
    };
    double sr = 0;
    int combos = 0;
    for (int cy : cuts(my / total))
        for (int cx : cuts(mx / total)) {
            sr += region_score(cy, cx);
            ++combos;
        }
    sr /= combos;
    return std::max(0.5 * so + 0.5 * sr, 0.0);
}

// ---- enhanced-alignment measure ----

inline double e_measure_ref(const Map& pred, const Map& gt) {
    auto bin = binarize_adaptive(pred);
    double gt_sum = 0;
    for (double g : gt.v) gt_sum += g;
    std::vector<double> enhanced(bin.size());
    if (gt_sum == 0) {
        for (std::size_t i = 0; i < bin.size(); ++i) enhanced[i] = 1.0 - bin[i];
    } else if (gt_sum == static_cast<double>(gt.v.size())) {
        enhanced = bin;
    } else {
        double mg = mean_of(gt.v), mb = mean_of(bin);
        for (std::size_t i = 0; i < bin.size(); ++i) {
            double dg = gt.v[i] - mg, db = bin[i] - mb;
            double align = 2 * dg * db / (dg * dg + db * db + kEps);
            enhanced[i] = (align + 1) * (align + 1) / 4.0;
        }
    }
    return mean_of(enhanced);
}

} // namespace metric_oracles
