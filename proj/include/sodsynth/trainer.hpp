#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sodsynth/dataset.hpp"
#include "sodsynth/losses.hpp"
#include "sodsynth/metrics.hpp"
#include "sodsynth/model.hpp"
#include "sodsynth/synthgen.hpp"

namespace sodsynth {

struct TrainConfig {
    int epochs = 22;                          // desk-scale default
    double gib_only_fraction = 28.0 / 55.0;   // first phase trains GIB alone
    int batch_size = 4;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double lr_min = 1e-5;
    double lr_max = 5e-3;
    double lr_peak_fraction = 0.25;
    int input_size = 64;
    bool augment = true; // horizontal flip p=0.5 + rotation {0,90,180,270}
    std::uint64_t seed = 0;
    bool use_bab = true; // boundary branch supervision
    bool use_sc = true;  // self-consistent coupling
    double holdout_fraction = 0.2;
    int threads = 1; // batch elements in parallel; results independent of count

    void validate() const;
};

/// Warm-up and decay: linear lr_min -> lr_max over the first
/// lr_peak_fraction of steps, then linear back to lr_min at the last step.
double triangular_lr(int step, int total_steps, const TrainConfig& config);

/// Momentum buffers, one per parameter tensor.
struct SgdState {
    std::vector<ad::Tensor> velocity;
};

/// v <- momentum*v + grad + weight_decay*param; param <- param - lr*v.
void sgd_step(std::vector<ad::Variable>& params, const std::vector<ad::Tensor>& grads,
              SgdState& state, double lr, const TrainConfig& config, long step_index);

/// One training sample plus its precomputed synthetic variants.
struct TrainInput {
    ToySample base;
    std::vector<SyntheticSample> variants;
};

enum class Phase { GibOnly, Full };

/// One optimizer step over a batch (shared-weight siamese branches in the
/// full phase). Consumes rng for the per-element variant choice and
/// augmentation; the compute itself is deterministic and thread-safe.
LossBreakdown train_step(ToyModel& model, const std::vector<const TrainInput*>& batch,
                         Phase phase, const TrainConfig& config, const LossConfig& loss_config,
                         SgdState& state, double lr, long step_index, std::mt19937_64& rng);

struct StepRecord {
    double lr = 0;
    LossBreakdown loss;
};

struct TrainReport {
    std::vector<StepRecord> steps;
    std::vector<EvalResult> per_epoch; // held-out split, one entry per epoch
    EvalResult final_eval;
    std::size_t train_count = 0;
    std::size_t holdout_count = 0;
    std::string config_echo;
    double wall_seconds = 0; // reported separately, not part of the text serialization
};

/// Deterministic text serialization (excludes wall time so reruns with the
/// same seed produce identical bytes).
void write_report(const TrainReport& report, const std::string& path);

struct Checkpoint {
    std::vector<ad::Tensor> params;
    std::vector<ad::Tensor> velocity;
    long completed_epochs = 0;
    long global_step = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

struct TrainResult {
    TrainReport report;
    ToyModel model;
    Checkpoint checkpoint;
};

/// Full run: synthesizes n_variants per training image up front (unless
/// inputs already carry variants), trains the GIB-only phase then the full
/// phase, evaluates the held-out split each epoch. Deterministic per seed.
/// resume, when non-null, restores parameters/optimizer and continues;
/// stop_after_epochs < epochs ends the run early (for later resumption).
TrainResult train(const std::vector<TrainInput>& dataset, const TrainConfig& config,
                  const LossConfig& loss_config, const SynthConfig& synth_config,
                  const Checkpoint* resume = nullptr, int stop_after_epochs = -1,
                  const std::string& config_echo = "");

/// Convenience: wraps samples without variants (train() synthesizes them).
std::vector<TrainInput> make_train_inputs(std::vector<ToySample> samples);

} // namespace sodsynth
