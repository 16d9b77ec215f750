#include "sodsynth/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <thread>

#include "sodsynth/rng.hpp"

namespace sodsynth {

using ad::Tensor;
using ad::Variable;

void TrainConfig::validate() const {
    if (epochs < 1) throw ParameterError("TrainConfig: epochs must be >= 1");
    if (gib_only_fraction <= 0 || gib_only_fraction >= 1)
        throw ParameterError("TrainConfig: gib_only_fraction must lie in (0,1)");
    if (batch_size < 1) throw ParameterError("TrainConfig: batch_size must be >= 1");
    if (lr_min >= lr_max) throw ParameterError("TrainConfig: lr_min must be < lr_max");
    if (lr_peak_fraction <= 0 || lr_peak_fraction >= 1)
        throw ParameterError("TrainConfig: lr_peak_fraction must lie in (0,1)");
    if (holdout_fraction < 0 || holdout_fraction >= 1)
        throw ParameterError("TrainConfig: holdout_fraction must lie in [0,1)");
    if (threads < 1) throw ParameterError("TrainConfig: threads must be >= 1");
    if (input_size < 44)
        throw ParameterError("TrainConfig: input_size must be >= 44 so the downscaled "
                             "map still fits the SSIM window");
}

double triangular_lr(int step, int total_steps, const TrainConfig& config) {
    if (step < 0 || step >= total_steps)
        throw ParameterError("triangular_lr: step out of range");
    if (total_steps == 1) return config.lr_min;
    int peak = static_cast<int>(std::llround(config.lr_peak_fraction * (total_steps - 1)));
    peak = std::clamp(peak, 1, std::max(1, total_steps - 2));
    // endpoints and peak are exact, not results of interpolation rounding
    if (step == 0 || step == total_steps - 1) return config.lr_min;
    if (step == peak) return config.lr_max;
    const double span = config.lr_max - config.lr_min;
    if (step < peak)
        return config.lr_min + span * (static_cast<double>(step) / peak);
    return config.lr_min + span * (static_cast<double>(total_steps - 1 - step) /
                                   (total_steps - 1 - peak));
}

void sgd_step(std::vector<Variable>& params, const std::vector<Tensor>& grads, SgdState& state,
              double lr, const TrainConfig& config, long step_index) {
    if (params.size() != grads.size())
        throw DimensionError("sgd_step: parameter/gradient count mismatch");
    if (state.velocity.empty()) {
        for (const auto& p : params) state.velocity.push_back(Tensor::zeros_like(p.value()));
    }
    if (state.velocity.size() != params.size())
        throw DimensionError("sgd_step: optimizer state does not match parameters");

    for (std::size_t i = 0; i < params.size(); ++i) {
        const Tensor& value = params[i].value();
        const Tensor& grad = grads[i];
        if (!grad.same_shape(value))
            throw DimensionError("sgd_step: gradient shape mismatch at parameter " +
                                 std::to_string(i));
        if (!grad.all_finite())
            throw TrainingError("sgd_step: non-finite gradient at step " +
                                std::to_string(step_index));
        Tensor& v = state.velocity[i];
        Tensor next = value;
        for (std::size_t j = 0; j < v.numel(); ++j) {
            v[j] = config.momentum * v[j] + grad[j] + config.weight_decay * value[j];
            next[j] = value[j] - lr * v[j];
        }
        params[i].assign(std::move(next));
    }
}

// -------------------------------------------------------------------------
// batch step
// -------------------------------------------------------------------------

namespace {

struct Augment {
    bool hflip = false;
    int quarter_turns = 0;
};

RgbImage apply(const RgbImage& img, const Augment& a) {
    RgbImage out = a.hflip ? flip(img, FlipMode::Horizontal) : img;
    return a.quarter_turns ? rotate90(out, a.quarter_turns) : out;
}
ScribbleLabel apply(const ScribbleLabel& label, const Augment& a) {
    ScribbleLabel out = a.hflip ? flip(label, FlipMode::Horizontal) : label;
    return a.quarter_turns ? rotate90(out, a.quarter_turns) : out;
}
BinaryMask apply(const BinaryMask& mask, const Augment& a) {
    BinaryMask out = a.hflip ? flip(mask, FlipMode::Horizontal) : mask;
    return a.quarter_turns ? rotate90(out, a.quarter_turns) : out;
}

struct ElementPlan {
    const TrainInput* input = nullptr;
    Augment augment;
    int variant = -1; // full phase only
};

struct ElementResult {
    std::vector<Tensor> grads;
    LossBreakdown breakdown;
};

ElementResult element_pass(const ToyModel& shared, const ElementPlan& plan, Phase phase,
                           const TrainConfig& config, const LossConfig& loss_config) {
    // fork so concurrent elements never touch the same graph nodes
    const ToyModel model = shared.fork();
    const RgbImage image = apply(plan.input->base.sample.image, plan.augment);
    const ScribbleLabel label = apply(plan.input->base.sample.label, plan.augment);

    Variable img(ToyModel::image_to_tensor(image));
    Variable s_gib = model.forward(img);

    const int dh = std::max(1, static_cast<int>(std::lround(image.height *
                                                            loss_config.ssc_downscale)));
    const int dw = std::max(1, static_cast<int>(std::lround(image.width *
                                                            loss_config.ssc_downscale)));
    Variable s_scaled = model.forward(ad::bilinear_resize(img, dh, dw));
    Variable ssc = ssc_loss_from(s_scaled, s_gib, loss_config);
    GlobalLoss global = global_loss({s_gib}, label, image, ssc, loss_config);

    BranchLoss boundary;
    ScTerms sc;
    bool have_boundary = false, have_sc = false;
    if (phase == Phase::Full && (config.use_bab || config.use_sc)) {
        const SyntheticSample& variant =
            plan.input->variants[static_cast<std::size_t>(plan.variant)];
        const RgbImage synth_image = apply(variant.image, plan.augment);
        Variable s_bab = model.forward(Variable(ToyModel::image_to_tensor(synth_image)));
        if (config.use_bab) {
            const ScribbleLabel synth_label = apply(variant.label, plan.augment);
            boundary = boundary_loss({s_bab}, synth_label, synth_image, loss_config);
            have_boundary = true;
        }
        if (config.use_sc) {
            const BinaryMask mask = apply(variant.concave_mask, plan.augment);
            sc = sc_loss(remove_region(s_gib, mask), s_bab, loss_config);
            have_sc = true;
        }
    }

    TotalLoss total = total_loss(global, have_boundary ? &boundary : nullptr,
                                 have_sc ? &sc : nullptr, loss_config);
    ad::backward(total.value);

    ElementResult result;
    result.breakdown = total.breakdown;
    for (const auto& p : model.parameters()) result.grads.push_back(p.grad());
    return result;
}

void add_breakdown(LossBreakdown& acc, const LossBreakdown& b, double scale) {
    acc.total += scale * b.total;
    acc.global += scale * b.global;
    acc.boundary += scale * b.boundary;
    acc.sc += scale * b.sc;
    acc.pce_g += scale * b.pce_g;
    acc.lsc_g += scale * b.lsc_g;
    acc.ssc += scale * b.ssc;
    acc.pce_b += scale * b.pce_b;
    acc.lsc_b += scale * b.lsc_b;
    acc.sc_ssim += scale * b.sc_ssim;
    acc.sc_mse += scale * b.sc_mse;
    acc.sc_ncs += scale * b.sc_ncs;
}

} // namespace

LossBreakdown train_step(ToyModel& model, const std::vector<const TrainInput*>& batch,
                         Phase phase, const TrainConfig& config, const LossConfig& loss_config,
                         SgdState& state, double lr, long step_index, std::mt19937_64& rng) {
    if (batch.empty()) throw UsageError("train_step: empty batch");

    // draw all randomness up front so the compute below is parallelizable
    // without changing results
    std::vector<ElementPlan> plans;
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::uniform_int_distribution<int> rot(0, 3);
    for (const TrainInput* input : batch) {
        ElementPlan plan;
        plan.input = input;
        if (config.augment) {
            plan.augment.hflip = uni(rng) < 0.5;
            plan.augment.quarter_turns = rot(rng);
        }
        if (phase == Phase::Full && (config.use_bab || config.use_sc)) {
            if (input->variants.empty())
                throw TrainingError("train_step: sample '" + input->base.sample.id +
                                    "' has no synthetic variants (full phase, step " +
                                    std::to_string(step_index) + ")");
            std::uniform_int_distribution<int> pick(0,
                                                    static_cast<int>(input->variants.size()) - 1);
            plan.variant = pick(rng);
        }
        plans.push_back(plan);
    }

    std::vector<ElementResult> results(plans.size());
    const int workers = std::min<int>(config.threads, static_cast<int>(plans.size()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < plans.size(); ++i)
            results[i] = element_pass(model, plans[i], phase, config, loss_config);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
        for (int t = 0; t < workers; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t i = next.fetch_add(1); i < plans.size();
                         i = next.fetch_add(1))
                        results[i] = element_pass(model, plans[i], phase, config, loss_config);
                } catch (...) {
                    errors[static_cast<std::size_t>(t)] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    // ordered reduction: element order fixes the floating-point sums
    const double inv = 1.0 / static_cast<double>(results.size());
    std::vector<Tensor> grads;
    for (const auto& p : model.parameters()) grads.push_back(Tensor::zeros_like(p.value()));
    LossBreakdown mean_breakdown;
    for (const auto& r : results) {
        for (std::size_t p = 0; p < grads.size(); ++p)
            for (std::size_t j = 0; j < grads[p].numel(); ++j) grads[p][j] += r.grads[p][j];
        add_breakdown(mean_breakdown, r.breakdown, inv);
    }
    for (auto& g : grads)
        for (std::size_t j = 0; j < g.numel(); ++j) g[j] *= inv;

    sgd_step(model.parameters(), grads, state, lr, config, step_index);
    return mean_breakdown;
}

// -------------------------------------------------------------------------
// full training run
// -------------------------------------------------------------------------

namespace {

EvalResult evaluate_holdout(const ToyModel& model, const std::vector<const ToySample*>& holdout,
                            int threads) {
    std::vector<GrayImage> preds(holdout.size());
    std::vector<BinaryMask> gts(holdout.size());
    const int workers = std::min<int>(threads, static_cast<int>(holdout.size()));
    auto run = [&](std::size_t i) {
        preds[i] = model.predict(holdout[i]->sample.image);
        gts[i] = holdout[i]->ground_truth;
    };
    if (workers <= 1) {
        for (std::size_t i = 0; i < holdout.size(); ++i) run(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t)
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < holdout.size();
                     i = next.fetch_add(1))
                    run(i);
            });
        for (auto& th : pool) th.join();
    }
    return evaluate_dataset(preds, gts).mean;
}

} // namespace

std::vector<TrainInput> make_train_inputs(std::vector<ToySample> samples) {
    std::vector<TrainInput> inputs;
    inputs.reserve(samples.size());
    for (auto& s : samples) inputs.push_back(TrainInput{std::move(s), {}});
    return inputs;
}

TrainResult train(const std::vector<TrainInput>& dataset, const TrainConfig& config,
                  const LossConfig& loss_config, const SynthConfig& synth_config,
                  const Checkpoint* resume, int stop_after_epochs,
                  const std::string& config_echo) {
    config.validate();
    loss_config.validate();
    if (dataset.empty()) throw UsageError("train: empty dataset");
    for (const auto& input : dataset) {
        if (input.base.sample.image.height != config.input_size ||
            input.base.sample.image.width != config.input_size)
            throw DimensionError("train: sample '" + input.base.sample.id + "' is " +
                                 std::to_string(input.base.sample.image.height) + "x" +
                                 std::to_string(input.base.sample.image.width) +
                                 " but train.input_size is " +
                                 std::to_string(config.input_size));
    }

    const auto wall_start = std::chrono::steady_clock::now();

    // split: the tail of the dataset is held out
    const std::size_t n = dataset.size();
    std::size_t n_holdout = static_cast<std::size_t>(std::llround(config.holdout_fraction * n));
    if (n_holdout >= n) n_holdout = n - 1;
    const std::size_t n_train = n - n_holdout;

    std::vector<const TrainInput*> train_set;
    std::vector<const ToySample*> holdout;
    for (std::size_t i = 0; i < n_train; ++i) train_set.push_back(&dataset[i]);
    for (std::size_t i = n_train; i < n; ++i) holdout.push_back(&dataset[i].base);

    // precompute synthetic variants for inputs that do not carry them
    const bool needs_variants = config.use_bab || config.use_sc;
    std::vector<TrainInput> synthesized;
    if (needs_variants) {
        bool missing = false;
        for (const auto* input : train_set) missing |= input->variants.empty();
        if (missing) {
            synthesized.reserve(n_train);
            for (std::size_t i = 0; i < n_train; ++i) {
                TrainInput copy = dataset[i];
                if (copy.variants.empty()) {
                    for (int j = 0; j < synth_config.n_variants; ++j)
                        copy.variants.push_back(
                            synthesize(copy.base.sample, synth_config,
                                       mix64(config.seed, static_cast<std::uint64_t>(i),
                                             static_cast<std::uint64_t>(j))));
                }
                synthesized.push_back(std::move(copy));
            }
            train_set.clear();
            for (const auto& input : synthesized) train_set.push_back(&input);
        }
    }

    ToyModel model(config.seed);
    SgdState state;
    long start_epoch = 0;
    long global_step = 0;
    if (resume) {
        auto& params = model.parameters();
        if (resume->params.size() != params.size())
            throw FormatError("train: checkpoint parameter count mismatch");
        for (std::size_t i = 0; i < params.size(); ++i) params[i].assign(resume->params[i]);
        state.velocity = resume->velocity;
        start_epoch = resume->completed_epochs;
        global_step = resume->global_step;
    }

    const long steps_per_epoch =
        static_cast<long>((n_train + config.batch_size - 1) / config.batch_size);
    const long total_steps = steps_per_epoch * config.epochs;
    const long gib_epochs =
        std::clamp<long>(std::llround(config.gib_only_fraction * config.epochs), 0,
                         config.epochs);
    const long end_epoch = stop_after_epochs >= 0
                               ? std::min<long>(stop_after_epochs, config.epochs)
                               : config.epochs;

    TrainReport report;
    report.train_count = n_train;
    report.holdout_count = holdout.size();
    report.config_echo = config_echo;

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (long epoch = start_epoch; epoch < end_epoch; ++epoch) {
        const Phase phase = (config.use_bab || config.use_sc) && epoch >= gib_epochs
                                ? Phase::Full
                                : Phase::GibOnly;
        // the permutation must be a pure function of (seed, epoch) so that
        // resumed runs see the same batches
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        auto shuffle_rng = derive_rng(config.seed, rng_tag::kTrainShuffle,
                                      static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        for (long s = 0; s < steps_per_epoch; ++s, ++global_step) {
            std::vector<const TrainInput*> batch;
            for (long b = 0; b < config.batch_size; ++b) {
                const std::size_t idx = static_cast<std::size_t>(s * config.batch_size + b);
                if (idx >= order.size()) break;
                batch.push_back(train_set[order[idx]]);
            }
            const double lr = triangular_lr(static_cast<int>(global_step),
                                            static_cast<int>(total_steps), config);
            auto step_rng = derive_rng(config.seed, rng_tag::kTrainStep,
                                       mix64(static_cast<std::uint64_t>(epoch),
                                             static_cast<std::uint64_t>(s)));
            LossBreakdown breakdown = train_step(model, batch, phase, config, loss_config,
                                                 state, lr, global_step, step_rng);
            report.steps.push_back({lr, breakdown});
        }

        if (!holdout.empty())
            report.per_epoch.push_back(evaluate_holdout(model, holdout, config.threads));
    }

    if (!report.per_epoch.empty()) report.final_eval = report.per_epoch.back();
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();

    TrainResult result;
    result.model = model;
    for (const auto& p : model.parameters()) result.checkpoint.params.push_back(p.value());
    if (state.velocity.empty())
        for (const auto& p : model.parameters())
            result.checkpoint.velocity.push_back(Tensor::zeros_like(p.value()));
    else
        result.checkpoint.velocity = state.velocity;
    result.checkpoint.completed_epochs = end_epoch;
    result.checkpoint.global_step = global_step;
    result.report = std::move(report);
    return result;
}

// -------------------------------------------------------------------------
// report / checkpoint serialization
// -------------------------------------------------------------------------

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

void write_report(const TrainReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open report '" + path + "' for writing");
    out << "# sodsynth train report v1\n";
    out << "train_count " << report.train_count << "\n";
    out << "holdout_count " << report.holdout_count << "\n";
    if (!report.config_echo.empty()) {
        out << "config_begin\n" << report.config_echo;
        if (report.config_echo.back() != '\n') out << "\n";
        out << "config_end\n";
    }
    for (std::size_t i = 0; i < report.steps.size(); ++i) {
        const auto& s = report.steps[i];
        out << "step " << i << " lr " << fmt(s.lr) << " total " << fmt(s.loss.total)
            << " global " << fmt(s.loss.global) << " boundary " << fmt(s.loss.boundary)
            << " sc " << fmt(s.loss.sc) << " pce_g " << fmt(s.loss.pce_g) << " lsc_g "
            << fmt(s.loss.lsc_g) << " ssc " << fmt(s.loss.ssc) << " pce_b "
            << fmt(s.loss.pce_b) << " lsc_b " << fmt(s.loss.lsc_b) << " sc_ssim "
            << fmt(s.loss.sc_ssim) << " sc_mse " << fmt(s.loss.sc_mse) << " sc_ncs "
            << fmt(s.loss.sc_ncs) << "\n";
    }
    for (std::size_t e = 0; e < report.per_epoch.size(); ++e) {
        const auto& m = report.per_epoch[e];
        out << "epoch " << e << " s_measure " << fmt(m.s_measure) << " fbeta "
            << fmt(m.mean_fbeta) << " mae " << fmt(m.mae) << " e_measure "
            << fmt(m.e_measure) << "\n";
    }
    out << "final s_measure " << fmt(report.final_eval.s_measure) << " fbeta "
        << fmt(report.final_eval.mean_fbeta) << " mae " << fmt(report.final_eval.mae)
        << " e_measure " << fmt(report.final_eval.e_measure) << "\n";
    if (!out) throw IoError("failed writing report '" + path + "'");
}

namespace {

constexpr char kCkptMagic[8] = {'S', 'O', 'D', 'C', 'K', 'P', 'T', '1'};

void write_tensors(std::ofstream& out, const std::vector<Tensor>& tensors) {
    const std::uint32_t count = static_cast<std::uint32_t>(tensors.size());
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    for (const auto& t : tensors) {
        const std::uint32_t rank = static_cast<std::uint32_t>(t.rank());
        out.write(reinterpret_cast<const char*>(&rank), sizeof(rank));
        for (int d : t.shape()) {
            const std::uint32_t dim = static_cast<std::uint32_t>(d);
            out.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
        }
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.numel() * sizeof(double)));
    }
}

std::vector<Tensor> read_tensors(std::ifstream& in, const std::string& path) {
    std::uint32_t count = 0;
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    std::vector<Tensor> tensors;
    for (std::uint32_t i = 0; i < count && in; ++i) {
        std::uint32_t rank = 0;
        in.read(reinterpret_cast<char*>(&rank), sizeof(rank));
        if (rank > 8) throw FormatError("checkpoint '" + path + "': implausible tensor rank");
        std::vector<int> shape;
        for (std::uint32_t d = 0; d < rank; ++d) {
            std::uint32_t dim = 0;
            in.read(reinterpret_cast<char*>(&dim), sizeof(dim));
            shape.push_back(static_cast<int>(dim));
        }
        Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
        tensors.push_back(std::move(t));
    }
    if (!in) throw FormatError("checkpoint '" + path + "': truncated tensor table");
    return tensors;
}

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint '" + path + "' for writing");
    out.write(kCkptMagic, sizeof(kCkptMagic));
    const std::uint32_t version = 1;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    write_tensors(out, ckpt.params);
    write_tensors(out, ckpt.velocity);
    const std::int64_t epochs = ckpt.completed_epochs, step = ckpt.global_step;
    out.write(reinterpret_cast<const char*>(&epochs), sizeof(epochs));
    out.write(reinterpret_cast<const char*>(&step), sizeof(step));
    if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0)
        throw FormatError("checkpoint '" + path + "': bad magic header");
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (version != 1)
        throw FormatError("checkpoint '" + path + "': unsupported version " +
                          std::to_string(version));
    Checkpoint ckpt;
    ckpt.params = read_tensors(in, path);
    ckpt.velocity = read_tensors(in, path);
    std::int64_t epochs = 0, step = 0;
    in.read(reinterpret_cast<char*>(&epochs), sizeof(epochs));
    in.read(reinterpret_cast<char*>(&step), sizeof(step));
    if (!in) throw FormatError("checkpoint '" + path + "': truncated footer");
    ckpt.completed_epochs = epochs;
    ckpt.global_step = step;
    return ckpt;
}

} // namespace sodsynth
