#include "sodsynth/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sodsynth/errors.hpp"

namespace sodsynth {

namespace {

constexpr double kEps = 2.220446049250313e-16;
constexpr double kBetaSq = 0.3;

void check_dims(const GrayImage& pred, const BinaryMask& gt, const char* who) {
    if (pred.height != gt.height || pred.width != gt.width)
        throw DimensionError(std::string(who) + ": prediction " + std::to_string(pred.height) +
                             "x" + std::to_string(pred.width) + " vs ground truth " +
                             std::to_string(gt.height) + "x" + std::to_string(gt.width));
}

double mean_value(const GrayImage& img) {
    double s = 0;
    for (double v : img.values) s += v;
    return s / static_cast<double>(img.values.size());
}

std::vector<std::uint8_t> adaptive_binarize(const GrayImage& pred) {
    const double t = std::min(2.0 * mean_value(pred), 1.0);
    std::vector<std::uint8_t> bin(pred.values.size());
    for (std::size_t i = 0; i < bin.size(); ++i) bin[i] = pred.values[i] >= t;
    return bin;
}

double fbeta_from_binary(const std::vector<std::uint8_t>& bin, const BinaryMask& gt) {
    std::size_t tp = 0, positives = 0, actual = 0;
    for (std::size_t i = 0; i < bin.size(); ++i) {
        positives += bin[i];
        actual += gt.values[i];
        tp += bin[i] && gt.values[i];
    }
    if (positives == 0) return 0.0;
    const double precision = static_cast<double>(tp) / static_cast<double>(positives);
    const double recall = static_cast<double>(tp) / static_cast<double>(actual);
    const double denom = kBetaSq * precision + recall;
    if (denom == 0.0) return 0.0;
    return (1.0 + kBetaSq) * precision * recall / denom;
}

} // namespace

double mae(const GrayImage& pred, const BinaryMask& gt) {
    check_dims(pred, gt, "mae");
    double acc = 0;
    for (std::size_t i = 0; i < pred.values.size(); ++i)
        acc += std::fabs(pred.values[i] - static_cast<double>(gt.values[i]));
    return acc / static_cast<double>(pred.values.size());
}

double mean_fbeta(const GrayImage& pred, const BinaryMask& gt, bool threshold_sweep) {
    check_dims(pred, gt, "mean_fbeta");
    if (gt.empty_mask())
        throw UndefinedMetricError("mean_fbeta: ground truth has no foreground");
    if (!threshold_sweep) return fbeta_from_binary(adaptive_binarize(pred), gt);

    double total = 0;
    std::vector<std::uint8_t> bin(pred.values.size());
    for (int t = 1; t <= 255; ++t) {
        const double threshold = t / 255.0;
        for (std::size_t i = 0; i < bin.size(); ++i) bin[i] = pred.values[i] >= threshold;
        total += fbeta_from_binary(bin, gt);
    }
    return total / 255.0;
}

// -------------------------------------------------------------------------
// structure measure
// -------------------------------------------------------------------------

namespace {

// mean/std of prediction restricted to a region; std uses N-1 normalization
double object_score(const GrayImage& pred, const BinaryMask& region, bool complement) {
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        if (!region.values[i]) continue;
        sum += complement ? 1.0 - pred.values[i] : pred.values[i];
        ++n;
    }
    if (n == 0) return 0.0;
    const double x = sum / static_cast<double>(n);
    double var = 0;
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        if (!region.values[i]) continue;
        const double v = (complement ? 1.0 - pred.values[i] : pred.values[i]) - x;
        var += v * v;
    }
    const double sigma = n > 1 ? std::sqrt(var / static_cast<double>(n - 1)) : 0.0;
    return 2.0 * x / (x * x + 1.0 + sigma + kEps);
}

double s_object(const GrayImage& pred, const BinaryMask& gt) {
    BinaryMask bg(gt.height, gt.width);
    for (std::size_t i = 0; i < gt.values.size(); ++i) bg.values[i] = !gt.values[i];
    const double u = static_cast<double>(gt.count()) / static_cast<double>(gt.values.size());
    return u * object_score(pred, gt, false) + (1.0 - u) * object_score(pred, bg, true);
}

// region SSIM on one quadrant [r0,r1) x [c0,c1); N-1 variance normalization
double region_ssim(const GrayImage& pred, const BinaryMask& gt, int r0, int r1, int c0, int c1) {
    const long long n = static_cast<long long>(r1 - r0) * (c1 - c0);
    if (n <= 0) return 0.0;
    double sx = 0, sy = 0;
    for (int r = r0; r < r1; ++r)
        for (int c = c0; c < c1; ++c) {
            sx += pred.at(r, c);
            sy += gt.at(r, c);
        }
    const double x = sx / static_cast<double>(n);
    const double y = sy / static_cast<double>(n);
    double vx = 0, vy = 0, vxy = 0;
    for (int r = r0; r < r1; ++r)
        for (int c = c0; c < c1; ++c) {
            const double dx = pred.at(r, c) - x;
            const double dy = gt.at(r, c) - y;
            vx += dx * dx;
            vy += dy * dy;
            vxy += dx * dy;
        }
    const double norm = static_cast<double>(n) - 1.0 + kEps;
    const double sigma_x2 = vx / norm, sigma_y2 = vy / norm, sigma_xy = vxy / norm;
    const double alpha = 4.0 * x * y * sigma_xy;
    const double beta = (x * x + y * y) * (sigma_x2 + sigma_y2);
    if (alpha != 0.0) return alpha / (beta + kEps);
    if (beta == 0.0) return 1.0;
    return 0.0;
}

// Cut positions for one axis from the (0-based) centroid coordinate. A
// non-integer centroid has one natural cut, ceil(centroid); when the
// centroid falls exactly on a pixel center both adjacent cuts are equally
// valid and their scores are averaged, which keeps the measure exactly
// invariant under mirroring.
std::vector<int> centroid_cuts(double centroid) {
    const double r = std::round(centroid);
    if (std::fabs(centroid - r) < 1e-12) {
        const int m = static_cast<int>(r);
        return {m, m + 1};
    }
    return {static_cast<int>(std::ceil(centroid))};
}

double s_region_at(const GrayImage& pred, const BinaryMask& gt, int cy, int cx) {
    const int rows = gt.height, cols = gt.width;
    const double area = static_cast<double>(rows) * cols;
    const double w1 = (static_cast<double>(cx) * cy) / area;
    const double w2 = (static_cast<double>(cols - cx) * cy) / area;
    const double w3 = (static_cast<double>(cx) * (rows - cy)) / area;
    const double w4 = 1.0 - w1 - w2 - w3;
    return w1 * region_ssim(pred, gt, 0, cy, 0, cx) + w2 * region_ssim(pred, gt, 0, cy, cx, cols) +
           w3 * region_ssim(pred, gt, cy, rows, 0, cx) +
           w4 * region_ssim(pred, gt, cy, rows, cx, cols);
}

double s_region(const GrayImage& pred, const BinaryMask& gt) {
    double total = 0, mx = 0, my = 0;
    for (int r = 0; r < gt.height; ++r)
        for (int c = 0; c < gt.width; ++c)
            if (gt.at(r, c)) {
                total += 1;
                mx += c;
                my += r;
            }
    const auto row_cuts = centroid_cuts(my / total);
    const auto col_cuts = centroid_cuts(mx / total);
    double acc = 0;
    for (int cy : row_cuts)
        for (int cx : col_cuts) acc += s_region_at(pred, gt, cy, cx);
    return acc / static_cast<double>(row_cuts.size() * col_cuts.size());
}

} // namespace

double s_measure(const GrayImage& pred, const BinaryMask& gt) {
    check_dims(pred, gt, "s_measure");
    const double y = static_cast<double>(gt.count()) / static_cast<double>(gt.values.size());
    if (y == 0.0) return 1.0 - mean_value(pred);
    if (y == 1.0) return mean_value(pred);
    const double q = 0.5 * s_object(pred, gt) + 0.5 * s_region(pred, gt);
    return std::max(q, 0.0);
}

// -------------------------------------------------------------------------
// enhanced-alignment measure
// -------------------------------------------------------------------------

namespace {

double e_from_binary(const std::vector<std::uint8_t>& bin, const BinaryMask& gt) {
    const std::size_t n = gt.values.size();
    const std::size_t gt_count = gt.count();
    double acc = 0;
    if (gt_count == 0) {
        for (std::size_t i = 0; i < n; ++i) acc += 1.0 - bin[i];
    } else if (gt_count == n) {
        for (std::size_t i = 0; i < n; ++i) acc += bin[i];
    } else {
        double mu_gt = static_cast<double>(gt_count) / static_cast<double>(n);
        double mu_bin = 0;
        for (std::size_t i = 0; i < n; ++i) mu_bin += bin[i];
        mu_bin /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double dg = static_cast<double>(gt.values[i]) - mu_gt;
            const double db = static_cast<double>(bin[i]) - mu_bin;
            const double align = 2.0 * dg * db / (dg * dg + db * db + kEps);
            acc += (align + 1.0) * (align + 1.0) / 4.0;
        }
    }
    return acc / static_cast<double>(n);
}

} // namespace

double e_measure(const GrayImage& pred, const BinaryMask& gt, bool threshold_sweep) {
    check_dims(pred, gt, "e_measure");
    if (!threshold_sweep) return e_from_binary(adaptive_binarize(pred), gt);

    double total = 0;
    std::vector<std::uint8_t> bin(pred.values.size());
    for (int t = 1; t <= 255; ++t) {
        const double threshold = t / 255.0;
        for (std::size_t i = 0; i < bin.size(); ++i) bin[i] = pred.values[i] >= threshold;
        total += e_from_binary(bin, gt);
    }
    return total / 255.0;
}

DatasetEval evaluate_dataset(const std::vector<GrayImage>& preds,
                             const std::vector<BinaryMask>& gts) {
    if (preds.size() != gts.size())
        throw DimensionError("evaluate_dataset: " + std::to_string(preds.size()) +
                             " predictions vs " + std::to_string(gts.size()) + " ground truths");
    if (preds.empty()) throw UsageError("evaluate_dataset: empty input");

    DatasetEval eval;
    eval.n_images = preds.size();
    double f_total = 0;
    std::size_t f_count = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        eval.mean.mae += mae(preds[i], gts[i]);
        eval.mean.s_measure += s_measure(preds[i], gts[i]);
        eval.mean.e_measure += e_measure(preds[i], gts[i]);
        if (gts[i].empty_mask()) {
            ++eval.fbeta_excluded;
        } else {
            f_total += mean_fbeta(preds[i], gts[i]);
            ++f_count;
        }
    }
    const double n = static_cast<double>(preds.size());
    eval.mean.mae /= n;
    eval.mean.s_measure /= n;
    eval.mean.e_measure /= n;
    eval.mean.mean_fbeta = f_count ? f_total / static_cast<double>(f_count) : 0.0;
    return eval;
}

} // namespace sodsynth
