#include "sodsynth/losses.hpp"

#include <algorithm>
#include <cmath>

namespace sodsynth {

using ad::Tensor;
using ad::Variable;
using ad::detail::Node;

void LossConfig::validate() const {
    auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in01(alpha1) || !in01(alpha2) || !in01(alpha3))
        throw ParameterError("LossConfig: alpha weights must lie in [0,1]");
    if (!std::isfinite(gamma)) throw ParameterError("LossConfig: gamma must be finite");
    if (stage_weights.empty()) throw ParameterError("LossConfig: stage_weights must be nonempty");
    for (double w : stage_weights)
        if (!std::isfinite(w)) throw ParameterError("LossConfig: stage weight not finite");
    if (lsc_radius < 1) throw ParameterError("LossConfig: lsc_radius must be >= 1");
    if (lsc_downscale <= 0 || lsc_downscale > 1 || ssc_downscale <= 0 || ssc_downscale > 1)
        throw ParameterError("LossConfig: downscale factors must lie in (0,1]");
    if (ssim_window < 3 || ssim_window % 2 == 0)
        throw ParameterError("LossConfig: ssim_window must be odd and >= 3");
    if (ssim_sigma <= 0 || sigma_i <= 0 || sigma_p <= 0)
        throw ParameterError("LossConfig: kernel scales must be positive");
}

namespace {

void check_map(const Variable& v, const char* who) {
    if (v.value().rank() != 2)
        throw DimensionError(std::string(who) + ": expected a [H,W] map, got " +
                             v.value().shape_str());
}

// [H,W] <-> [1,H,W] plumbing around the channel-based resize
Variable resize_map(const Variable& map, int out_h, int out_w) {
    const int h = map.value().dim(0), w = map.value().dim(1);
    Variable chan = ad::reshape(map, {1, h, w});
    return ad::reshape(ad::bilinear_resize(chan, out_h, out_w), {out_h, out_w});
}

int scaled_dim(int dim, double factor) {
    return std::max(1, static_cast<int>(std::lround(dim * factor)));
}

Tensor image_tensor(const RgbImage& img) {
    Tensor t({3, img.height, img.width});
    for (int ch = 0; ch < 3; ++ch)
        for (int r = 0; r < img.height; ++r)
            for (int c = 0; c < img.width; ++c) t.at3(ch, r, c) = img.at(r, c, ch);
    return t;
}

} // namespace

// -------------------------------------------------------------------------
// partial cross entropy
// -------------------------------------------------------------------------

Variable partial_ce(const Variable& pred, const ScribbleLabel& label) {
    check_map(pred, "partial_ce");
    const int h = pred.value().dim(0), w = pred.value().dim(1);
    if (label.height != h || label.width != w)
        throw DimensionError("partial_ce: prediction and label dimensions differ");

    Tensor weight({h, w}, 0.0);
    Tensor target({h, w}, 0.0);
    std::size_t labeled = 0;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const PixelState s = label.at(r, c);
            if (s == PixelState::Unknown) continue;
            weight.at2(r, c) = 1.0;
            target.at2(r, c) = s == PixelState::Foreground ? 1.0 : 0.0;
            ++labeled;
        }
    }
    if (labeled == 0) throw UsageError("partial_ce: label has no labeled pixels (J is empty)");

    Variable wv(weight), yv(target);
    Variable ll = ad::add(ad::mul(yv, ad::log(pred)),
                          ad::mul(ad::sub(1.0, yv), ad::log(ad::sub(1.0, pred))));
    return ad::mul(ad::sum(ad::mul(wv, ll)), -1.0 / static_cast<double>(labeled));
}

// -------------------------------------------------------------------------
// SSIM
// -------------------------------------------------------------------------

namespace {

Tensor gaussian_window(int size, double sigma) {
    std::vector<double> k1(static_cast<std::size_t>(size));
    double sum = 0;
    const int mid = size / 2;
    for (int i = 0; i < size; ++i) {
        k1[static_cast<std::size_t>(i)] =
            std::exp(-((i - mid) * static_cast<double>(i - mid)) / (2 * sigma * sigma));
        sum += k1[static_cast<std::size_t>(i)];
    }
    for (auto& v : k1) v /= sum;
    Tensor k({1, 1, size, size});
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c)
            k.at4(0, 0, r, c) = k1[static_cast<std::size_t>(r)] * k1[static_cast<std::size_t>(c)];
    return k;
}

} // namespace

Variable ssim(const Variable& x, const Variable& y, const LossConfig& config) {
    check_map(x, "ssim");
    check_map(y, "ssim");
    if (!(x.shape() == y.shape()))
        throw DimensionError("ssim: map shapes differ: " + x.value().shape_str() + " vs " +
                             y.value().shape_str());
    const int h = x.value().dim(0), w = x.value().dim(1);
    if (h < config.ssim_window || w < config.ssim_window)
        throw ParameterError("ssim: maps smaller than the window (" +
                             std::to_string(config.ssim_window) + ")");

    Variable window(gaussian_window(config.ssim_window, config.ssim_sigma));
    auto smooth = [&](const Variable& v) {
        return ad::conv2d(ad::reshape(v, {1, h, w}), window, 1, 0);
    };

    Variable mu_x = smooth(x);
    Variable mu_y = smooth(y);
    Variable sigma_x = ad::sub(smooth(ad::square(x)), ad::square(mu_x));
    Variable sigma_y = ad::sub(smooth(ad::square(y)), ad::square(mu_y));
    Variable sigma_xy = ad::sub(smooth(ad::mul(x, y)), ad::mul(mu_x, mu_y));

    const double c1 = config.ssim_c1, c2 = config.ssim_c2;
    Variable num = ad::mul(ad::add(ad::mul(ad::mul(mu_x, mu_y), 2.0), c1),
                           ad::add(ad::mul(sigma_xy, 2.0), c2));
    Variable den = ad::mul(ad::add(ad::add(ad::square(mu_x), ad::square(mu_y)), c1),
                           ad::add(ad::add(sigma_x, sigma_y), c2));
    return ad::mean(ad::div(num, den));
}

// -------------------------------------------------------------------------
// scale consistency
// -------------------------------------------------------------------------

Variable ssc_loss_from(const Variable& s_scaled_pred, const Variable& s_full,
                       const LossConfig& config) {
    check_map(s_scaled_pred, "ssc_loss");
    check_map(s_full, "ssc_loss");
    const int dh = s_scaled_pred.value().dim(0), dw = s_scaled_pred.value().dim(1);
    if (dh < config.ssim_window || dw < config.ssim_window)
        throw ParameterError("ssc_loss: downscaled maps smaller than the SSIM window");
    Variable s_down = resize_map(s_full, dh, dw);
    Variable structural = ad::mul(ad::sub(1.0, ssim(s_scaled_pred, s_down, config)),
                                  config.alpha2 * 0.5);
    Variable l1 = ad::mul(ad::mean(ad::abs(ad::sub(s_scaled_pred, s_down))),
                          1.0 - config.alpha2);
    return ad::add(structural, l1);
}

Variable ssc_loss(const ModelFn& model, const Variable& image, const LossConfig& config) {
    if (image.value().rank() != 3 || image.value().dim(0) != 3)
        throw DimensionError("ssc_loss: image must be [3,H,W]");
    const int h = image.value().dim(1), w = image.value().dim(2);
    const int dh = scaled_dim(h, config.ssc_downscale), dw = scaled_dim(w, config.ssc_downscale);
    if (dh < config.ssim_window || dw < config.ssim_window)
        throw ParameterError("ssc_loss: downscaled input smaller than the SSIM window");
    Variable s_scaled = model(ad::bilinear_resize(image, dh, dw));
    Variable s_full = model(image);
    return ssc_loss_from(s_scaled, s_full, config);
}

// -------------------------------------------------------------------------
// local saliency coherence
// -------------------------------------------------------------------------

namespace {

struct LscPair {
    int i, j;
    double f;
};

} // namespace

Variable lsc_loss(const Variable& pred, const RgbImage& image, const LossConfig& config) {
    check_map(pred, "lsc_loss");
    const int h = pred.value().dim(0), w = pred.value().dim(1);
    if (image.height != h || image.width != w)
        throw DimensionError("lsc_loss: prediction and image dimensions differ");

    const int dh = scaled_dim(h, config.lsc_downscale), dw = scaled_dim(w, config.lsc_downscale);
    Variable sd = resize_map(pred, dh, dw);
    const Tensor small = ad::bilinear_resize(Variable(image_tensor(image)), dh, dw).value();

    // kernel rows: F(i,j) normalized so each center's weights sum to 1
    auto pairs = std::make_shared<std::vector<LscPair>>();
    const double inv_2si = 1.0 / (2 * config.sigma_i * config.sigma_i);
    const double inv_2sp = 1.0 / (2 * config.sigma_p * config.sigma_p);
    const int radius = config.lsc_radius;
    std::vector<double> raw;
    for (int r = 0; r < dh; ++r) {
        for (int c = 0; c < dw; ++c) {
            raw.clear();
            double omega = 0;
            for (int dr = -radius; dr <= radius; ++dr) {
                for (int dc = -radius; dc <= radius; ++dc) {
                    if (dr == 0 && dc == 0) continue;
                    const int nr = r + dr, nc = c + dc;
                    if (nr < 0 || nr >= dh || nc < 0 || nc >= dw) continue;
                    double color = 0;
                    for (int ch = 0; ch < 3; ++ch) {
                        const double d = small.at3(ch, r, c) - small.at3(ch, nr, nc);
                        color += d * d;
                    }
                    const double pos = static_cast<double>(dr) * dr + static_cast<double>(dc) * dc;
                    const double f = std::exp(-color * inv_2si - pos * inv_2sp);
                    raw.push_back(f);
                    omega += f;
                }
            }
            std::size_t idx = 0;
            for (int dr = -radius; dr <= radius; ++dr) {
                for (int dc = -radius; dc <= radius; ++dc) {
                    if (dr == 0 && dc == 0) continue;
                    const int nr = r + dr, nc = c + dc;
                    if (nr < 0 || nr >= dh || nc < 0 || nc >= dw) continue;
                    pairs->push_back({r * dw + c, nr * dw + nc, raw[idx++] / omega});
                }
            }
        }
    }

    const double inv_pixels = 1.0 / static_cast<double>(dh * dw);
    const Tensor& s = sd.value();
    double loss = 0;
    for (const auto& p : *pairs) loss += p.f * std::fabs(s[static_cast<std::size_t>(p.i)] -
                                                         s[static_cast<std::size_t>(p.j)]);
    loss *= inv_pixels;

    return ad::make_op(Tensor::scalar(loss), {sd}, [pairs, inv_pixels](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        const double g = n.grad[0] * inv_pixels;
        const Tensor& s = p.value;
        for (const auto& e : *pairs) {
            const double d = s[static_cast<std::size_t>(e.i)] - s[static_cast<std::size_t>(e.j)];
            const double sgn = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
            p.grad[static_cast<std::size_t>(e.i)] += g * e.f * sgn;
            p.grad[static_cast<std::size_t>(e.j)] -= g * e.f * sgn;
        }
    });
}

// -------------------------------------------------------------------------
// negative cosine similarity
// -------------------------------------------------------------------------

Variable ncs_loss(const Variable& a, const Variable& b) {
    if (!(a.shape() == b.shape()))
        throw DimensionError("ncs_loss: shapes differ: " + a.value().shape_str() + " vs " +
                             b.value().shape_str());
    constexpr double kNormFloor = 1e-8;
    const Tensor& ta = a.value();
    const Tensor& tb = b.value();
    double dot = 0, qa = 0, qb = 0;
    for (std::size_t i = 0; i < ta.numel(); ++i) {
        dot += ta[i] * tb[i];
        qa += ta[i] * ta[i];
        qb += tb[i] * tb[i];
    }
    const double norm_a = std::max(std::sqrt(qa), kNormFloor);
    const double norm_b = std::max(std::sqrt(qb), kNormFloor);
    const double value = -dot / (norm_a * norm_b);

    return ad::make_op(Tensor::scalar(value), {a, b},
                       [dot, norm_a, norm_b, clamped_a = std::sqrt(qa) < kNormFloor,
                        clamped_b = std::sqrt(qb) < kNormFloor](Node& n) {
                           Node& pa = *n.parents[0];
                           Node& pb = *n.parents[1];
                           const double g = n.grad[0];
                           const Tensor& va = pa.value;
                           const Tensor& vb = pb.value;
                           if (pa.requires_grad) {
                               const double self = clamped_a
                                                       ? 0.0
                                                       : dot / (norm_a * norm_a * norm_a * norm_b);
                               for (std::size_t i = 0; i < va.numel(); ++i)
                                   pa.grad[i] += g * (-vb[i] / (norm_a * norm_b) + self * va[i]);
                           }
                           if (pb.requires_grad) {
                               const double self = clamped_b
                                                       ? 0.0
                                                       : dot / (norm_b * norm_b * norm_b * norm_a);
                               for (std::size_t i = 0; i < vb.numel(); ++i)
                                   pb.grad[i] += g * (-va[i] / (norm_a * norm_b) + self * vb[i]);
                           }
                       });
}

// -------------------------------------------------------------------------
// removed-region map
// -------------------------------------------------------------------------

Variable remove_region(const Variable& s_gib, const BinaryMask& concave_mask) {
    check_map(s_gib, "remove_region");
    const int h = s_gib.value().dim(0), w = s_gib.value().dim(1);
    if (concave_mask.height != h || concave_mask.width != w)
        throw DimensionError("remove_region: mask dimensions differ from the map");

    Tensor out = s_gib.value();
    auto mask = std::make_shared<BinaryMask>(concave_mask);
    for (std::size_t i = 0; i < out.numel(); ++i)
        if (mask->values[i]) out[i] = 0.0;

    return ad::make_op(std::move(out), {s_gib}, [mask](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < p.grad.numel(); ++i)
            if (!mask->values[i]) p.grad[i] += n.grad[i];
    });
}

// -------------------------------------------------------------------------
// self-consistent loss
// -------------------------------------------------------------------------

ScTerms sc_loss(const Variable& s_rgib, const Variable& s_bab, const LossConfig& config) {
    Variable left = config.stop_gradient_rgib ? s_rgib.detach() : s_rgib;
    Variable structural = ad::mul(ad::sub(1.0, ssim(left, s_bab, config)), 0.5);
    Variable mse = ad::mean(ad::square(ad::sub(left, s_bab)));
    Variable ncs = ncs_loss(left, s_bab);

    ScTerms terms;
    terms.ssim_term = structural.value().item();
    terms.mse_term = mse.value().item();
    terms.ncs_term = ncs.value().item();
    terms.value = ad::add(ad::add(ad::mul(structural, config.alpha3),
                                  ad::mul(mse, 1.0 - config.alpha3)),
                          ncs);
    return terms;
}

// -------------------------------------------------------------------------
// branch aggregation
// -------------------------------------------------------------------------

BranchLoss branch_supervision(const std::vector<Variable>& stage_preds,
                              const ScribbleLabel& label, const RgbImage& image,
                              const LossConfig& config) {
    config.validate();
    if (stage_preds.size() != config.stage_weights.size())
        throw ParameterError("branch_supervision: " + std::to_string(stage_preds.size()) +
                             " stage predictions but " +
                             std::to_string(config.stage_weights.size()) + " stage weights");

    BranchLoss branch;
    Variable acc = Variable::scalar(0.0);
    for (std::size_t p = 0; p < stage_preds.size(); ++p) {
        const double lambda = config.stage_weights[p];
        Variable pce = partial_ce(stage_preds[p], label);
        Variable lsc = lsc_loss(stage_preds[p], image, config);
        branch.pce += lambda * pce.value().item();
        branch.lsc += lambda * lsc.value().item();
        acc = ad::add(acc, ad::mul(ad::add(ad::mul(lsc, config.gamma), pce), lambda));
    }
    branch.value = acc;
    return branch;
}

GlobalLoss global_loss(const std::vector<Variable>& stage_preds, const ScribbleLabel& label,
                       const RgbImage& image, const Variable& ssc_term,
                       const LossConfig& config) {
    BranchLoss branch = branch_supervision(stage_preds, label, image, config);
    GlobalLoss global;
    global.pce = branch.pce;
    global.lsc = branch.lsc;
    global.ssc = ssc_term.value().item();
    global.value = ad::add(ssc_term, branch.value);
    return global;
}

BranchLoss boundary_loss(const std::vector<Variable>& stage_preds,
                         const ScribbleLabel& synth_label, const RgbImage& synth_image,
                         const LossConfig& config) {
    return branch_supervision(stage_preds, synth_label, synth_image, config);
}

TotalLoss total_loss(const GlobalLoss& global, const BranchLoss* boundary, const ScTerms* sc,
                     const LossConfig& config) {
    TotalLoss result;
    Variable acc = global.value;
    result.breakdown.global = global.value.value().item();
    result.breakdown.pce_g = global.pce;
    result.breakdown.lsc_g = global.lsc;
    result.breakdown.ssc = global.ssc;
    if (boundary) {
        acc = ad::add(acc, boundary->value);
        result.breakdown.boundary = boundary->value.value().item();
        result.breakdown.pce_b = boundary->pce;
        result.breakdown.lsc_b = boundary->lsc;
    }
    if (sc) {
        acc = ad::add(acc, ad::mul(sc->value, config.alpha1));
        result.breakdown.sc = sc->value.value().item();
        result.breakdown.sc_ssim = sc->ssim_term;
        result.breakdown.sc_mse = sc->mse_term;
        result.breakdown.sc_ncs = sc->ncs_term;
    }
    result.value = acc;
    result.breakdown.total = acc.value().item();
    return result;
}

} // namespace sodsynth
