#include <doctest.h>

#include <cmath>
#include <random>

#include "metric_oracles.hpp"
#include "sodsynth/metrics.hpp"
#include "sodsynth/rng.hpp"

using namespace sodsynth;

namespace {

GrayImage to_gray(const BinaryMask& m) {
    GrayImage g(m.height, m.width);
    for (std::size_t i = 0; i < m.values.size(); ++i) g.values[i] = m.values[i];
    return g;
}

metric_oracles::Map to_map(const GrayImage& g) {
    return {g.height, g.width, g.values};
}

metric_oracles::Map to_map(const BinaryMask& m) {
    metric_oracles::Map out{m.height, m.width, {}};
    out.v.assign(m.values.begin(), m.values.end());
    return out;
}

BinaryMask half_plane(int h, int w) {
    BinaryMask m(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w / 2; ++c) m.at(r, c) = 1;
    return m;
}

} // namespace

TEST_CASE("mae basics") {
    BinaryMask gt = half_plane(6, 6);
    CHECK(mae(to_gray(gt), gt) == 0.0);

    GrayImage inverted(6, 6);
    for (std::size_t i = 0; i < inverted.values.size(); ++i)
        inverted.values[i] = 1.0 - gt.values[i];
    CHECK(mae(inverted, gt) == 1.0);

    CHECK(mae(GrayImage(6, 6, 0.5), gt) == doctest::Approx(0.5));
    CHECK_THROWS_AS(mae(GrayImage(5, 6), gt), DimensionError);
}

TEST_CASE("mean_fbeta values") {
    BinaryMask gt = half_plane(8, 8);
    CHECK(mean_fbeta(to_gray(gt), gt) == doctest::Approx(1.0));

    // zero overlap
    GrayImage wrong(8, 8, 0.0);
    for (int r = 0; r < 8; ++r)
        for (int c = 5; c < 8; ++c) wrong.at(r, c) = 1.0;
    CHECK(mean_fbeta(wrong, gt) == 0.0);

    // P = 2/3, R = 1/2 by construction
    BinaryMask gt4(4, 4);
    gt4.at(0, 0) = gt4.at(0, 1) = gt4.at(1, 0) = gt4.at(1, 1) = 1;
    GrayImage pred4(4, 4, 0.0);
    pred4.at(0, 0) = pred4.at(0, 1) = 1.0; // two true positives
    pred4.at(3, 3) = 1.0;                  // one false positive
    const double expect = 1.3 * (2.0 / 3.0) * 0.5 / (0.3 * (2.0 / 3.0) + 0.5);
    CHECK(mean_fbeta(pred4, gt4) == doctest::Approx(expect).epsilon(1e-9));
    CHECK(expect == doctest::Approx(0.619).epsilon(1e-3));

    CHECK_THROWS_AS(mean_fbeta(pred4, BinaryMask(4, 4)), UndefinedMetricError);
}

TEST_CASE("s_measure values") {
    BinaryMask gt = half_plane(8, 8);
    CHECK(s_measure(to_gray(gt), gt) == doctest::Approx(1.0).epsilon(1e-6));

    // complement and constant predictions agree with the oracle transcription
    GrayImage inverted(8, 8);
    for (std::size_t i = 0; i < inverted.values.size(); ++i)
        inverted.values[i] = 1.0 - gt.values[i];
    CHECK(s_measure(inverted, gt) ==
          doctest::Approx(metric_oracles::s_measure_ref(to_map(inverted), to_map(gt)))
              .epsilon(1e-6));

    GrayImage flat(8, 8, 0.5);
    CHECK(s_measure(flat, gt) ==
          doctest::Approx(metric_oracles::s_measure_ref(to_map(flat), to_map(gt))).epsilon(1e-6));

    // degenerate ground truths fall back to mean-based scores
    CHECK(s_measure(GrayImage(8, 8, 0.2), BinaryMask(8, 8)) == doctest::Approx(0.8));
    CHECK(s_measure(GrayImage(8, 8, 0.2), BinaryMask(8, 8, 1)) == doctest::Approx(0.2));
}

TEST_CASE("e_measure values") {
    BinaryMask gt = half_plane(8, 8);
    CHECK(e_measure(to_gray(gt), gt) == doctest::Approx(1.0).epsilon(1e-6));

    GrayImage inverted(8, 8);
    for (std::size_t i = 0; i < inverted.values.size(); ++i)
        inverted.values[i] = 1.0 - gt.values[i];
    CHECK(e_measure(inverted, gt) ==
          doctest::Approx(metric_oracles::e_measure_ref(to_map(inverted), to_map(gt)))
              .epsilon(1e-6));

    // degenerate ground truths
    GrayImage some(8, 8, 0.0);
    some.at(0, 0) = some.at(1, 1) = 1.0;
    CHECK(e_measure(some, BinaryMask(8, 8)) == doctest::Approx(62.0 / 64.0));
    CHECK(e_measure(some, BinaryMask(8, 8, 1)) == doctest::Approx(2.0 / 64.0));
}

TEST_CASE("all four metrics agree with the brute-force oracles on random 8x8 maps") {
    auto rng = derive_rng(401, rng_tag::kGradCheck);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    int nonempty_cases = 0;
    for (int trial = 0; trial < 60; ++trial) {
        GrayImage pred(8, 8);
        for (auto& v : pred.values) v = uni(rng);
        BinaryMask gt(8, 8);
        for (auto& v : gt.values) v = uni(rng) < 0.4;

        auto mp = to_map(pred);
        auto mg = to_map(gt);
        CHECK(mae(pred, gt) == doctest::Approx(metric_oracles::mae_ref(mp, mg)).epsilon(1e-9));
        CHECK(s_measure(pred, gt) ==
              doctest::Approx(metric_oracles::s_measure_ref(mp, mg)).epsilon(1e-6));
        CHECK(e_measure(pred, gt) ==
              doctest::Approx(metric_oracles::e_measure_ref(mp, mg)).epsilon(1e-6));
        if (!gt.empty_mask()) {
            ++nonempty_cases;
            CHECK(mean_fbeta(pred, gt) ==
                  doctest::Approx(metric_oracles::fbeta_ref(mp, mg)).epsilon(1e-6));
        }
    }
    CHECK(nonempty_cases > 50);
}

TEST_CASE("metric invariances") {
    auto rng = derive_rng(402, rng_tag::kGradCheck);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    GrayImage pred(8, 8);
    for (auto& v : pred.values) v = uni(rng);
    BinaryMask gt = half_plane(8, 8);

    SUBCASE("horizontal flip of both inputs") {
        GrayImage pred_f = flip(pred, FlipMode::Horizontal);
        BinaryMask gt_f = flip(gt, FlipMode::Horizontal);
        CHECK(mae(pred, gt) == doctest::Approx(mae(pred_f, gt_f)).epsilon(1e-12));
        CHECK(mean_fbeta(pred, gt) == doctest::Approx(mean_fbeta(pred_f, gt_f)).epsilon(1e-12));
        CHECK(s_measure(pred, gt) == doctest::Approx(s_measure(pred_f, gt_f)).epsilon(1e-9));
        CHECK(e_measure(pred, gt) == doctest::Approx(e_measure(pred_f, gt_f)).epsilon(1e-12));
    }
    SUBCASE("mae complement symmetry") {
        GrayImage pred_c(8, 8);
        for (std::size_t i = 0; i < pred.values.size(); ++i)
            pred_c.values[i] = 1.0 - pred.values[i];
        BinaryMask gt_c(8, 8);
        for (std::size_t i = 0; i < gt.values.size(); ++i) gt_c.values[i] = !gt.values[i];
        CHECK(mae(pred, gt) == doctest::Approx(mae(pred_c, gt_c)).epsilon(1e-12));
    }
    SUBCASE("monotone rescale preserving the binarization is invisible to F and E") {
        // threshold is 2*mean: scaling all values by c scales the threshold
        // by c, so the binary map is unchanged
        GrayImage scaled(8, 8);
        for (std::size_t i = 0; i < pred.values.size(); ++i)
            scaled.values[i] = 0.5 * pred.values[i];
        CHECK(mean_fbeta(pred, gt) == doctest::Approx(mean_fbeta(scaled, gt)).epsilon(1e-12));
        CHECK(e_measure(pred, gt) == doctest::Approx(e_measure(scaled, gt)).epsilon(1e-12));
    }
}

TEST_CASE("threshold-sweep variants stay in range and behave") {
    auto rng = derive_rng(403, rng_tag::kGradCheck);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    GrayImage pred(8, 8);
    for (auto& v : pred.values) v = uni(rng);
    BinaryMask gt = half_plane(8, 8);
    const double f_sweep = mean_fbeta(pred, gt, true);
    const double e_sweep = e_measure(pred, gt, true);
    CHECK(f_sweep >= 0.0);
    CHECK(f_sweep <= 1.0);
    CHECK(e_sweep >= 0.0);
    CHECK(e_sweep <= 1.0 + 1e-9);
    // a perfect binary prediction sweeps to 1 everywhere but the extremes
    CHECK(mean_fbeta(to_gray(gt), gt, true) == doctest::Approx(1.0));
}

TEST_CASE("evaluate_dataset") {
    auto rng = derive_rng(404, rng_tag::kGradCheck);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    GrayImage p1(8, 8), p2(8, 8);
    for (auto& v : p1.values) v = uni(rng);
    for (auto& v : p2.values) v = uni(rng);
    BinaryMask g1 = half_plane(8, 8);
    BinaryMask g2(8, 8);
    for (int r = 2; r < 6; ++r)
        for (int c = 2; c < 6; ++c) g2.at(r, c) = 1;

    SUBCASE("single image equals per-image values") {
        DatasetEval e = evaluate_dataset({p1}, {g1});
        CHECK(e.mean.mae == doctest::Approx(mae(p1, g1)));
        CHECK(e.mean.mean_fbeta == doctest::Approx(mean_fbeta(p1, g1)));
        CHECK(e.mean.s_measure == doctest::Approx(s_measure(p1, g1)));
        CHECK(e.mean.e_measure == doctest::Approx(e_measure(p1, g1)));
        CHECK(e.n_images == 1);
    }
    SUBCASE("duplicated list leaves the means unchanged") {
        DatasetEval once = evaluate_dataset({p1}, {g1});
        DatasetEval twice = evaluate_dataset({p1, p1}, {g1, g1});
        CHECK(once.mean.mae == doctest::Approx(twice.mean.mae).epsilon(1e-12));
        CHECK(once.mean.mean_fbeta == doctest::Approx(twice.mean.mean_fbeta).epsilon(1e-12));
    }
    SUBCASE("two images average arithmetically") {
        DatasetEval e = evaluate_dataset({p1, p2}, {g1, g2});
        CHECK(e.mean.mae == doctest::Approx(0.5 * (mae(p1, g1) + mae(p2, g2))).epsilon(1e-12));
        CHECK(e.mean.s_measure ==
              doctest::Approx(0.5 * (s_measure(p1, g1) + s_measure(p2, g2))).epsilon(1e-12));
    }
    SUBCASE("empty ground truth excluded from F and counted") {
        DatasetEval e = evaluate_dataset({p1, p2}, {g1, BinaryMask(8, 8)});
        CHECK(e.fbeta_excluded == 1);
        CHECK(e.mean.mean_fbeta == doctest::Approx(mean_fbeta(p1, g1)));
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(evaluate_dataset({p1}, {g1, g2}), DimensionError);
        CHECK_THROWS_AS(evaluate_dataset({}, {}), UsageError);
    }
}
