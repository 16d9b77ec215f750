#pragma once

#include <cstddef>
#include <vector>

#include "sodsynth/image.hpp"

namespace sodsynth {

/// The four standard saliency scores, averaged per dataset.
struct EvalResult {
    double s_measure = 0;
    double mean_fbeta = 0;
    double mae = 0;
    double e_measure = 0;
};

/// Mean absolute error between a [0,1] prediction and a binary ground truth.
double mae(const GrayImage& pred, const BinaryMask& gt);

/// Adaptive-threshold F-measure with beta^2 = 0.3: binarize at
/// min(2*mean(pred), 1), F = 1.3*P*R/(0.3*P + R). With threshold_sweep the
/// mean F over 255 fixed thresholds is returned instead (conventions vary
/// between papers, so both are exposed).
double mean_fbeta(const GrayImage& pred, const BinaryMask& gt, bool threshold_sweep = false);

/// Structure measure: 0.5*S_object + 0.5*S_region (region term from SSIM
/// statistics over the four quadrants split at the ground-truth centroid).
double s_measure(const GrayImage& pred, const BinaryMask& gt);

/// Enhanced-alignment measure on the adaptively binarized prediction,
/// normalized as a plain mean so a perfect prediction scores exactly 1.
double e_measure(const GrayImage& pred, const BinaryMask& gt, bool threshold_sweep = false);

struct DatasetEval {
    EvalResult mean;
    std::size_t n_images = 0;
    std::size_t fbeta_excluded = 0; // images with empty ground truth
};

/// Per-image metrics averaged arithmetically. Images with an empty ground
/// truth are skipped for the F-measure and counted in fbeta_excluded.
DatasetEval evaluate_dataset(const std::vector<GrayImage>& preds,
                             const std::vector<BinaryMask>& gts);

} // namespace sodsynth
