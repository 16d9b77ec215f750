#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "sodsynth/rng.hpp"
#include "sodsynth/trainer.hpp"

using namespace sodsynth;
using ad::Tensor;
using ad::Variable;

namespace {

std::vector<TrainInput> small_corpus(int n, int size, std::uint64_t seed) {
    return make_train_inputs(generate_toy_dataset(n, size, seed));
}

TrainConfig fast_config() {
    TrainConfig config;
    config.epochs = 4;
    config.batch_size = 2;
    config.input_size = 48;
    config.seed = 9;
    config.holdout_fraction = 0.25;
    return config;
}

std::string report_text(const TrainReport& report) {
    auto path = std::filesystem::temp_directory_path() / "sodsynth_trainer_report.txt";
    write_report(report, path.string());
    std::ifstream in(path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("triangular_lr endpoints, peak and linearity") {
    TrainConfig config;
    const int total = 200;
    CHECK(triangular_lr(0, total, config) == config.lr_min);
    CHECK(triangular_lr(total - 1, total, config) == config.lr_min);

    const int peak = static_cast<int>(std::llround(config.lr_peak_fraction * (total - 1)));
    CHECK(triangular_lr(peak, total, config) == config.lr_max);

    double maximum = 0;
    for (int s = 0; s < total; ++s) maximum = std::max(maximum, triangular_lr(s, total, config));
    CHECK(maximum == config.lr_max);

    // piecewise linear: constant increments on each side of the peak
    const double up = triangular_lr(1, total, config) - triangular_lr(0, total, config);
    for (int s = 1; s <= peak; ++s)
        CHECK(triangular_lr(s, total, config) - triangular_lr(s - 1, total, config) ==
              doctest::Approx(up).epsilon(1e-12));
    const double down = triangular_lr(peak + 1, total, config) - triangular_lr(peak, total, config);
    for (int s = peak + 1; s < total; ++s)
        CHECK(triangular_lr(s, total, config) - triangular_lr(s - 1, total, config) ==
              doctest::Approx(down).epsilon(1e-12));

    CHECK_THROWS_AS(triangular_lr(total, total, config), ParameterError);
}

TEST_CASE("sgd_step update rule") {
    TrainConfig config;
    SUBCASE("no momentum, no decay: plain gradient descent") {
        config.momentum = 0;
        config.weight_decay = 0;
        std::vector<Variable> params{Variable(Tensor({2}, {1.0, 2.0}), true)};
        SgdState state;
        sgd_step(params, {Tensor({2}, {0.5, -1.0})}, state, 0.1, config, 0);
        CHECK(params[0].value()[0] == doctest::Approx(0.95));
        CHECK(params[0].value()[1] == doctest::Approx(2.1));
    }
    SUBCASE("zero gradient: velocity decays geometrically") {
        config.momentum = 0.9;
        config.weight_decay = 0;
        std::vector<Variable> params{Variable(Tensor::scalar(1.0), true)};
        SgdState state;
        sgd_step(params, {Tensor::scalar(1.0)}, state, 0.0, config, 0);
        CHECK(state.velocity[0][0] == doctest::Approx(1.0));
        sgd_step(params, {Tensor::scalar(0.0)}, state, 0.0, config, 1);
        CHECK(state.velocity[0][0] == doctest::Approx(0.9));
        sgd_step(params, {Tensor::scalar(0.0)}, state, 0.0, config, 2);
        CHECK(state.velocity[0][0] == doctest::Approx(0.81));
    }
    SUBCASE("two hand-simulated steps on a scalar") {
        config.momentum = 0.9;
        config.weight_decay = 0.1;
        std::vector<Variable> params{Variable(Tensor::scalar(2.0), true)};
        SgdState state;
        // step 1: v = 0.9*0 + 0.5 + 0.1*2 = 0.7; p = 2 - 0.1*0.7 = 1.93
        sgd_step(params, {Tensor::scalar(0.5)}, state, 0.1, config, 0);
        CHECK(params[0].value()[0] == doctest::Approx(1.93));
        // step 2: v = 0.9*0.7 + 0.2 + 0.1*1.93 = 1.023; p = 1.93 - 0.1*1.023
        sgd_step(params, {Tensor::scalar(0.2)}, state, 0.1, config, 1);
        CHECK(params[0].value()[0] == doctest::Approx(1.93 - 0.1023));
    }
    SUBCASE("non-finite gradient raises with the step index") {
        std::vector<Variable> params{Variable(Tensor::scalar(1.0), true)};
        SgdState state;
        CHECK_THROWS_WITH_AS(
            sgd_step(params, {Tensor::scalar(std::nan(""))}, state, 0.1, config, 17),
            doctest::Contains("17"), TrainingError);
    }
}

TEST_CASE("train_step baseline flags reduce to GIB-only supervision") {
    auto inputs = small_corpus(2, 48, 21);
    TrainConfig config = fast_config();
    config.use_bab = false;
    config.use_sc = false;
    LossConfig loss_config;
    ToyModel model(config.seed);
    SgdState state;
    auto rng = derive_rng(config.seed, rng_tag::kTrainStep, 0);
    std::vector<const TrainInput*> batch{&inputs[0], &inputs[1]};
    // full phase requested, but with both flags off no variants are needed
    LossBreakdown b = train_step(model, batch, Phase::Full, config, loss_config, state, 1e-3, 0,
                                 rng);
    CHECK(b.boundary == 0.0);
    CHECK(b.sc == 0.0);
    CHECK(b.pce_b == 0.0);
    CHECK(b.total == doctest::Approx(b.global).epsilon(1e-12));
}

TEST_CASE("train_step with synthetic == original and empty mask reduces analytically") {
    auto inputs = small_corpus(1, 48, 22);
    // hand-built degenerate variant: identical image, empty concave mask
    SyntheticSample degenerate;
    degenerate.base_id = inputs[0].base.sample.id;
    degenerate.image = inputs[0].base.sample.image;
    degenerate.label = inputs[0].base.sample.label;
    degenerate.concave_mask = BinaryMask(48, 48);
    inputs[0].variants.push_back(degenerate);

    TrainConfig config = fast_config();
    config.augment = true;
    LossConfig loss_config;
    ToyModel model(config.seed);
    SgdState state;
    auto rng = derive_rng(config.seed, rng_tag::kTrainStep, 1);
    std::vector<const TrainInput*> batch{&inputs[0]};
    LossBreakdown b =
        train_step(model, batch, Phase::Full, config, loss_config, state, 1e-3, 0, rng);

    // identical branch inputs: boundary = global - ssc, sc at identical-input values
    CHECK(b.boundary == doctest::Approx(b.global - b.ssc).epsilon(1e-12));
    CHECK(b.pce_b == doctest::Approx(b.pce_g).epsilon(1e-12));
    CHECK(b.lsc_b == doctest::Approx(b.lsc_g).epsilon(1e-12));
    CHECK(b.sc == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(b.sc_ssim == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(b.sc_mse == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("train_step is deterministic and independent of the worker count") {
    auto inputs = small_corpus(4, 48, 23);
    LossConfig loss_config;
    SynthConfig synth_config;
    synth_config.n_variants = 2;
    for (std::size_t i = 0; i < inputs.size(); ++i)
        for (int j = 0; j < synth_config.n_variants; ++j)
            inputs[i].variants.push_back(synthesize(inputs[i].base.sample, synth_config,
                                                    mix64(77, i, static_cast<std::uint64_t>(j))));

    auto run = [&](int threads) {
        TrainConfig config = fast_config();
        config.threads = threads;
        ToyModel model(config.seed);
        SgdState state;
        auto rng = derive_rng(config.seed, rng_tag::kTrainStep, 2);
        std::vector<const TrainInput*> batch;
        for (const auto& input : inputs) batch.push_back(&input);
        LossBreakdown b =
            train_step(model, batch, Phase::Full, config, loss_config, state, 2e-3, 0, rng);
        return std::make_pair(b, model.parameter_checksum());
    };

    auto [b1, sum1] = run(1);
    auto [b2, sum2] = run(2);
    auto [b3, sum3] = run(1);
    CHECK(b1.total == b2.total);
    CHECK(b1.pce_g == b2.pce_g);
    CHECK(b1.sc == b2.sc);
    CHECK(sum1 == sum2);
    CHECK(b1.total == b3.total);
    CHECK(sum1 == sum3);
}

TEST_CASE("train_step requires variants in the full phase") {
    auto inputs = small_corpus(1, 48, 24);
    TrainConfig config = fast_config();
    LossConfig loss_config;
    ToyModel model(config.seed);
    SgdState state;
    auto rng = derive_rng(config.seed, rng_tag::kTrainStep, 3);
    std::vector<const TrainInput*> batch{&inputs[0]};
    CHECK_THROWS_AS(
        train_step(model, batch, Phase::Full, config, loss_config, state, 1e-3, 0, rng),
        TrainingError);
}

TEST_CASE("shared weights: both branches see the identical parameter vector") {
    ToyModel model(3);
    const std::uint64_t before = model.parameter_checksum();
    auto img = Variable(ToyModel::image_to_tensor(RgbImage(48, 48, 0.5)));
    Variable gib = model.forward(img);
    const std::uint64_t between = model.parameter_checksum();
    Variable bab = model.forward(img);
    const std::uint64_t after = model.parameter_checksum();
    CHECK(before == between);
    CHECK(between == after);
    // identical parameters and inputs produce identical maps
    for (std::size_t i = 0; i < gib.value().numel(); ++i)
        CHECK(gib.value()[i] == bab.value()[i]);
}

TEST_CASE("train bookkeeping: one image, one epoch") {
    auto inputs = small_corpus(1, 48, 25);
    TrainConfig config = fast_config();
    config.epochs = 1;
    config.use_bab = false;
    config.use_sc = false;
    config.holdout_fraction = 0.0;
    LossConfig loss_config;
    SynthConfig synth_config;
    TrainResult result = train(inputs, config, loss_config, synth_config);
    CHECK(result.report.steps.size() == 1);
    CHECK(result.report.train_count == 1);
    CHECK(result.report.holdout_count == 0);
    CHECK(result.checkpoint.global_step == 1);
}

TEST_CASE("train is deterministic: identical reports and checkpoints") {
    auto inputs = small_corpus(6, 48, 26);
    TrainConfig config = fast_config();
    config.epochs = 2;
    LossConfig loss_config;
    SynthConfig synth_config;
    synth_config.n_variants = 2;

    TrainResult a = train(inputs, config, loss_config, synth_config);
    TrainResult b = train(inputs, config, loss_config, synth_config);
    CHECK(report_text(a.report) == report_text(b.report));
    REQUIRE(a.checkpoint.params.size() == b.checkpoint.params.size());
    for (std::size_t i = 0; i < a.checkpoint.params.size(); ++i)
        for (std::size_t j = 0; j < a.checkpoint.params[i].numel(); ++j)
            CHECK(a.checkpoint.params[i][j] == b.checkpoint.params[i][j]);
}

TEST_CASE("resume reproduces the remaining lr trace and the full run") {
    auto inputs = small_corpus(6, 48, 27);
    TrainConfig config = fast_config();
    config.epochs = 4;
    LossConfig loss_config;
    SynthConfig synth_config;
    synth_config.n_variants = 2;

    TrainResult full = train(inputs, config, loss_config, synth_config);
    TrainResult first = train(inputs, config, loss_config, synth_config, nullptr, 2);
    TrainResult second =
        train(inputs, config, loss_config, synth_config, &first.checkpoint, -1);

    REQUIRE(first.report.steps.size() + second.report.steps.size() ==
            full.report.steps.size());
    for (std::size_t i = 0; i < first.report.steps.size(); ++i)
        CHECK(first.report.steps[i].lr == full.report.steps[i].lr);
    for (std::size_t i = 0; i < second.report.steps.size(); ++i) {
        CHECK(second.report.steps[i].lr ==
              full.report.steps[first.report.steps.size() + i].lr);
        CHECK(second.report.steps[i].loss.total ==
              full.report.steps[first.report.steps.size() + i].loss.total);
    }
    // resumed final parameters equal the uninterrupted run's
    for (std::size_t i = 0; i < full.checkpoint.params.size(); ++i)
        for (std::size_t j = 0; j < full.checkpoint.params[i].numel(); ++j)
            CHECK(second.checkpoint.params[i][j] == full.checkpoint.params[i][j]);
}

TEST_CASE("training reduces the partial cross entropy") {
    auto inputs = small_corpus(8, 48, 28);
    TrainConfig config = fast_config();
    config.epochs = 8;
    config.use_bab = false;
    config.use_sc = false;
    config.holdout_fraction = 0.0;
    LossConfig loss_config;
    SynthConfig synth_config;
    TrainResult result = train(inputs, config, loss_config, synth_config);

    const auto& steps = result.report.steps;
    REQUIRE(steps.size() >= 20);
    const std::size_t tenth = std::max<std::size_t>(steps.size() / 10, 2);
    auto median_pce = [&](std::size_t from, std::size_t to) {
        std::vector<double> values;
        for (std::size_t i = from; i < to; ++i) values.push_back(steps[i].loss.pce_g);
        std::sort(values.begin(), values.end());
        return values[values.size() / 2];
    };
    CHECK(median_pce(steps.size() - tenth, steps.size()) < median_pce(0, tenth));
}

TEST_CASE("checkpoint round trip") {
    auto dir = std::filesystem::temp_directory_path() / "sodsynth_ckpt";
    std::filesystem::create_directories(dir);
    Checkpoint ckpt;
    ckpt.params = {Tensor({2, 3}, {1, 2, 3, 4, 5, 6}), Tensor::scalar(7.5)};
    ckpt.velocity = {Tensor({2, 3}, 0.25), Tensor::scalar(-1.0)};
    ckpt.completed_epochs = 3;
    ckpt.global_step = 42;
    const auto path = (dir / "test.ckpt").string();
    save_checkpoint(ckpt, path);
    Checkpoint back = load_checkpoint(path);
    CHECK(back.completed_epochs == 3);
    CHECK(back.global_step == 42);
    REQUIRE(back.params.size() == 2);
    CHECK(back.params[0].shape() == std::vector<int>{2, 3});
    for (std::size_t j = 0; j < 6; ++j) CHECK(back.params[0][j] == ckpt.params[0][j]);
    CHECK(back.velocity[1][0] == -1.0);

    // corrupted magic rejected
    std::ofstream bad(dir / "bad.ckpt", std::ios::binary);
    bad << "NOTACKPTxxxxxxxxxxxxxxxx";
    bad.close();
    CHECK_THROWS_AS(load_checkpoint((dir / "bad.ckpt").string()), FormatError);
}

TEST_CASE("config validation") {
    TrainConfig config;
    config.epochs = 0;
    CHECK_THROWS_AS(config.validate(), ParameterError);
    config = TrainConfig{};
    config.lr_min = 1.0;
    CHECK_THROWS_AS(config.validate(), ParameterError);
    config = TrainConfig{};
    config.gib_only_fraction = 1.0;
    CHECK_THROWS_AS(config.validate(), ParameterError);
}
