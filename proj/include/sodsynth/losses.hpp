#pragma once

#include <functional>
#include <vector>

#include "sodsynth/autodiff.hpp"
#include "sodsynth/image.hpp"
#include "sodsynth/scribble.hpp"

namespace sodsynth {

/// All loss hyperparameters. Defaults follow the training configuration the
/// method was built around; every field can be overridden from the config.
struct LossConfig {
    double alpha1 = 0.5;  // weight of the self-consistent loss in the total
    double alpha2 = 0.85; // SSIM share inside the scale-consistency loss
    double alpha3 = 0.5;  // SSIM share inside the self-consistent loss
    double gamma = 0.3;   // weight of the local coherence term per stage
    std::vector<double> stage_weights = {1.0}; // lambda, one per decoder stage
    double sigma_i = 0.1; // color scale of the coherence kernel (RGB in [0,1])
    double sigma_p = 6.0; // position scale of the coherence kernel (pixels)
    int lsc_radius = 5;
    double lsc_downscale = 0.25;
    double ssc_downscale = 0.25;
    int ssim_window = 11;
    double ssim_sigma = 1.5;
    double ssim_c1 = 0.01 * 0.01;
    double ssim_c2 = 0.03 * 0.03;
    bool stop_gradient_rgib = false; // optional stop-gradient on the removed-region map

    void validate() const;
};

/// Scalar values of every term, extracted after the graph is built.
/// sc_ssim/sc_mse/sc_ncs are the unweighted addends of the self-consistent
/// loss; total == global + boundary + alpha1 * sc.
struct LossBreakdown {
    double total = 0, global = 0, boundary = 0, sc = 0;
    double pce_g = 0, lsc_g = 0, ssc = 0;
    double pce_b = 0, lsc_b = 0;
    double sc_ssim = 0, sc_mse = 0, sc_ncs = 0;
};

/// Saliency detector as a function: [3,H,W] image -> [H,W] map in (0,1).
using ModelFn = std::function<ad::Variable(const ad::Variable&)>;

/// Binary cross entropy restricted to the labeled pixel set J, mean over J.
/// Unknown pixels contribute nothing and receive exactly zero gradient.
ad::Variable partial_ce(const ad::Variable& pred, const ScribbleLabel& label);

/// Single-scale SSIM with a Gaussian window, mean over valid positions.
ad::Variable ssim(const ad::Variable& x, const ad::Variable& y, const LossConfig& config = {});

/// Scale consistency: compares the prediction on the downscaled input
/// against the downscaled prediction on the full input.
ad::Variable ssc_loss(const ModelFn& model, const ad::Variable& image, const LossConfig& config);

/// Same from precomputed maps: s_scaled_pred is the prediction on the
/// downscaled image, s_full the full-resolution prediction (resized here).
ad::Variable ssc_loss_from(const ad::Variable& s_scaled_pred, const ad::Variable& s_full,
                           const LossConfig& config);

/// Local saliency coherence over the downscaled prediction, weighted by the
/// color/position Gaussian kernel of the downscaled image; mean over pixels.
ad::Variable lsc_loss(const ad::Variable& pred, const RgbImage& image,
                      const LossConfig& config = {});

/// Negative cosine similarity over flattened maps, norms clamped at 1e-8.
ad::Variable ncs_loss(const ad::Variable& a, const ad::Variable& b);

/// Zeroes the concave-region pixels and blocks their gradient.
ad::Variable remove_region(const ad::Variable& s_gib, const BinaryMask& concave_mask);

struct ScTerms {
    ad::Variable value;     // alpha3*(1-ssim)/2 + (1-alpha3)*mse + ncs
    double ssim_term = 0;   // (1 - SSIM)/2
    double mse_term = 0;
    double ncs_term = 0;
};

ScTerms sc_loss(const ad::Variable& s_rgib, const ad::Variable& s_bab,
                const LossConfig& config = {});

/// One branch's supervision: sum_p lambda_p * (gamma*lsc_p + pce_p).
struct BranchLoss {
    ad::Variable value;
    double pce = 0; // lambda-weighted sums, for reporting
    double lsc = 0;
};

BranchLoss branch_supervision(const std::vector<ad::Variable>& stage_preds,
                              const ScribbleLabel& label, const RgbImage& image,
                              const LossConfig& config);

struct GlobalLoss {
    ad::Variable value; // ssc + branch supervision
    double pce = 0, lsc = 0, ssc = 0;
};

GlobalLoss global_loss(const std::vector<ad::Variable>& stage_preds, const ScribbleLabel& label,
                       const RgbImage& image, const ad::Variable& ssc_term,
                       const LossConfig& config);

/// Boundary branch on the synthetic image and label; no scale term.
BranchLoss boundary_loss(const std::vector<ad::Variable>& stage_preds,
                         const ScribbleLabel& synth_label, const RgbImage& synth_image,
                         const LossConfig& config);

struct TotalLoss {
    ad::Variable value;
    LossBreakdown breakdown;
};

/// total = global + boundary + alpha1 * sc; boundary/sc may be null (their
/// breakdown entries read 0).
TotalLoss total_loss(const GlobalLoss& global, const BranchLoss* boundary, const ScTerms* sc,
                     const LossConfig& config);

} // namespace sodsynth
