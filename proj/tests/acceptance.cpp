// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. The ablation-trend criterion trains real models and dominates
// the runtime (roughly 25 minutes on two cores).
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "metric_oracles.hpp"
#include "sodsynth/dataset.hpp"
#include "sodsynth/gradcheck_suite.hpp"
#include "sodsynth/losses.hpp"
#include "sodsynth/metrics.hpp"
#include "sodsynth/rng.hpp"
#include "sodsynth/runconfig.hpp"
#include "sodsynth/synthgen.hpp"
#include "sodsynth/trainer.hpp"

using namespace sodsynth;
using ad::Tensor;
using ad::Variable;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int criterion, const std::string& name, bool passed, const std::string& detail) {
    std::printf("[%s] criterion %d: %s (%s)\n", passed ? "PASS" : "FAIL", criterion,
                name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!passed) ++failures;
}

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

constexpr std::uint64_t kMasterSeed = 20260811;

// ---- criterion 1: gradient suite ----

void criterion_gradients() {
    const double start = now_seconds();
    GradSuiteResult suite = run_gradcheck_suite(kMasterSeed, 20, 1e-4, 1e-3);
    const double elapsed = now_seconds() - start;
    std::string worst_name;
    double worst = 0;
    bool ops_ok = true;
    for (const auto& r : suite.reports) {
        if (r.op_name == "negative_control") continue;
        if (r.max_rel_error > worst) {
            worst = r.max_rel_error;
            worst_name = r.op_name;
        }
        ops_ok = ops_ok && r.passed;
    }
    const bool time_ok = elapsed < 120.0;
    report(1, "gradient suite (20 instances per loss op)",
           suite.all_passed && ops_ok && time_ok,
           "worst rel " + fmt(worst) + " at " + worst_name + ", " + fmt(elapsed) +
               " s, negative control caught");
}

// ---- criterion 2: synthesis geometry over 500 samples ----

void criterion_synthesis_geometry() {
    const auto samples = generate_toy_dataset(50, 64, kMasterSeed);
    SynthConfig config;
    int checked = 0, violations = 0;
    std::string first_violation;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        for (int j = 0; j < 10; ++j) {
            SyntheticSample synth =
                synthesize(samples[i].sample, config,
                           mix64(kMasterSeed, static_cast<std::uint64_t>(i),
                                 static_cast<std::uint64_t>(j)));
            ++checked;
            auto fail = [&](const std::string& why) {
                ++violations;
                if (first_violation.empty())
                    first_violation = samples[i].sample.id + "/" + std::to_string(j) + ": " + why;
            };
            // mask invariants, label override, bit-exact outside feathering
            const auto issues = validate_synthetic(samples[i].sample, synth);
            for (const auto& issue : issues) fail(issue);
            // path length: regenerate from the recorded endpoints
            const PathSkeleton path = generate_path(synth.endpoint_bg, synth.endpoint_fg);
            const int chebyshev = std::max(std::abs(synth.endpoint_fg.row - synth.endpoint_bg.row),
                                           std::abs(synth.endpoint_fg.col - synth.endpoint_bg.col));
            if (path.length() != chebyshev + 1) fail("path length != Chebyshev + 1");
            // half-extents strictly inside (0, k) along the whole path
            for (int n = 0; n < path.length(); ++n) {
                for (const CornerShape& corner : {synth.upper_left, synth.lower_right}) {
                    const double d =
                        halfwidth(n, path.length(), synth.k, corner.beta1, corner.beta2);
                    if (!(d > 0.0 && d < synth.k)) fail("halfwidth outside (0, k)");
                }
            }
        }
    }
    report(2, "synthesis geometry on 500 synthetic samples", violations == 0,
           std::to_string(checked) + " samples, " + std::to_string(violations) +
               " violations" +
               (first_violation.empty() ? "" : "; first: " + first_violation));
}

// ---- criterion 3: window shape spot value ----

void criterion_halfwidth_spot() {
    const double d = halfwidth(1, 2, 12, 0.5, 1.5); // n/N = 0.5
    const bool ok = std::fabs(d - 7.0607) <= 1e-4;
    report(3, "halfwidth spot value k=12 beta1=0.5 beta2=1.5 n/N=0.5", ok, "d = " + fmt(d));
}

// ---- criterion 4: loss identities ----

void criterion_loss_identities() {
    auto rng = derive_rng(kMasterSeed, 0x4);
    std::uniform_real_distribution<double> uni(0.05, 0.95);
    LossConfig config;
    bool ok = true;
    std::string detail;
    auto expect = [&](bool cond, const std::string& what) {
        if (!cond && detail.empty()) detail = "failed: " + what;
        ok = ok && cond;
    };

    const auto toy = generate_toy_dataset(1, 64, mix64(kMasterSeed, 4))[0];

    // constant prediction -> lsc == 0
    expect(lsc_loss(Variable(Tensor({64, 64}, 0.4)), toy.sample.image, config).value().item() ==
               0.0,
           "lsc(constant) == 0");

    // identical maps
    Tensor m({32, 32});
    for (auto i = 0u; i < m.numel(); ++i) m[i] = uni(rng);
    Variable vm(m);
    expect(ssim(vm, vm, config).value().item() == 1.0, "ssim(x,x) == 1");
    expect(std::fabs(sc_loss(vm, vm, config).value.value().item() + 1.0) < 1e-9,
           "sc(x,x) == -1");
    GrayImage gray(32, 32);
    for (std::size_t i = 0; i < gray.values.size(); ++i) gray.values[i] = m[i] > 0.5;
    BinaryMask mask(32, 32);
    for (std::size_t i = 0; i < mask.values.size(); ++i) mask.values[i] = gray.values[i] > 0.5;
    expect(mae(gray, mask) == 0.0, "mae(x,x) == 0");

    // 0.5 prediction on J -> ln 2
    const double pce =
        partial_ce(Variable(Tensor({64, 64}, 0.5)), toy.sample.label).value().item();
    expect(std::fabs(pce - std::log(2.0)) <= 1e-9, "pce(0.5) == ln 2");

    // breakdown identity on random instances
    for (int trial = 0; trial < 10; ++trial) {
        Tensor pred({64, 64}), small({16, 16}), bab({64, 64});
        for (auto i = 0u; i < pred.numel(); ++i) pred[i] = uni(rng);
        for (auto i = 0u; i < small.numel(); ++i) small[i] = uni(rng);
        for (auto i = 0u; i < bab.numel(); ++i) bab[i] = uni(rng);
        Variable vpred(pred), vsmall(small), vbab(bab);
        Variable ssc = ssc_loss_from(vsmall, vpred, config);
        GlobalLoss global = global_loss({vpred}, toy.sample.label, toy.sample.image, ssc, config);
        BinaryMask region(64, 64);
        for (int r = 20; r < 30; ++r)
            for (int c = 10; c < 40; ++c) region.at(r, c) = 1;
        BranchLoss boundary = boundary_loss({vbab}, toy.sample.label, toy.sample.image, config);
        ScTerms sc = sc_loss(remove_region(vpred, region), vbab, config);
        TotalLoss total = total_loss(global, &boundary, &sc, config);
        const double recomposed = total.breakdown.global + total.breakdown.boundary +
                                  config.alpha1 * total.breakdown.sc;
        expect(std::fabs(total.breakdown.total - recomposed) <= 1e-9,
               "total == global + boundary + alpha1*sc");
    }
    report(4, "loss identities", ok, detail.empty() ? "all identities hold" : detail);
}

// ---- criterion 5: metric oracle agreement ----

void criterion_metric_oracles() {
    auto rng = derive_rng(kMasterSeed, 0x5);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    double worst = 0;
    int checked = 0;
    bool ok = true;
    std::string detail;
    for (int trial = 0; trial < 200; ++trial) {
        GrayImage pred(8, 8);
        for (auto& v : pred.values) v = uni(rng);
        BinaryMask gt(8, 8);
        std::size_t fg = 0;
        do {
            fg = 0;
            for (auto& v : gt.values) fg += (v = uni(rng) < 0.4);
        } while (fg == 0);

        metric_oracles::Map mp{8, 8, pred.values};
        metric_oracles::Map mg{8, 8, {}};
        mg.v.assign(gt.values.begin(), gt.values.end());

        const double diffs[4] = {
            std::fabs(mae(pred, gt) - metric_oracles::mae_ref(mp, mg)),
            std::fabs(mean_fbeta(pred, gt) - metric_oracles::fbeta_ref(mp, mg)),
            std::fabs(s_measure(pred, gt) - metric_oracles::s_measure_ref(mp, mg)),
            std::fabs(e_measure(pred, gt) - metric_oracles::e_measure_ref(mp, mg))};
        for (double d : diffs) {
            worst = std::max(worst, d);
            if (d > 1e-6) ok = false;
        }
        ++checked;
    }
    // perfect prediction scores (S, F, MAE, E) == (1, 1, 0, 1)
    BinaryMask gt(8, 8);
    for (int r = 2; r < 6; ++r)
        for (int c = 1; c < 7; ++c) gt.at(r, c) = 1;
    GrayImage perfect(8, 8);
    for (std::size_t i = 0; i < perfect.values.size(); ++i) perfect.values[i] = gt.values[i];
    if (std::fabs(s_measure(perfect, gt) - 1.0) > 1e-6 ||
        std::fabs(mean_fbeta(perfect, gt) - 1.0) > 1e-9 || mae(perfect, gt) != 0.0 ||
        std::fabs(e_measure(perfect, gt) - 1.0) > 1e-6) {
        ok = false;
        detail = "perfect prediction does not score (1,1,0,1)";
    }
    report(5, "metric oracle agreement on 200 random 8x8 pairs", ok,
           detail.empty() ? std::to_string(checked) + " cases, worst |diff| " + fmt(worst)
                          : detail);
}

// ---- criterion 6: ablation trend ----

void criterion_ablation_trend() {
    const auto corpus = generate_toy_dataset(250, 64, kMasterSeed);
    const auto inputs = make_train_inputs(corpus);
    LossConfig loss_config;
    SynthConfig synth_config;

    int improved = 0;
    double mean_improvement = 0;
    bool time_ok = true;
    std::string rows;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        TrainConfig config;
        config.seed = seed;
        config.threads = 2; // ordered reduction keeps results thread-count independent
        const double start = now_seconds();
        TrainConfig full_config = config;
        TrainResult full = train(inputs, full_config, loss_config, synth_config);
        TrainConfig base_config = config;
        base_config.use_bab = false;
        base_config.use_sc = false;
        TrainResult base = train(inputs, base_config, loss_config, synth_config);
        const double elapsed = now_seconds() - start;

        const double delta = full.report.final_eval.mean_fbeta - base.report.final_eval.mean_fbeta;
        improved += delta > 0;
        mean_improvement += delta / 5.0;
        if (elapsed >= 600.0) time_ok = false;
        rows += "\n    seed " + std::to_string(seed) + ": F " +
                fmt(base.report.final_eval.mean_fbeta) + " -> " +
                fmt(full.report.final_eval.mean_fbeta) + " (delta " + fmt(delta) + ", pair " +
                fmt(elapsed) + " s)";
        std::printf("  criterion 6 progress:%s\n", rows.c_str());
        std::fflush(stdout);
        rows.clear();
    }
    report(6, "ablation trend: full framework vs baseline on 200/50 toy corpus",
           improved >= 4 && mean_improvement > 0 && time_ok,
           std::to_string(improved) + "/5 pairs improved, mean delta F " +
               fmt(mean_improvement) + (time_ok ? "" : ", a pair exceeded 10 min"));
}

// ---- criterion 7: training determinism via the CLI ----

void criterion_determinism() {
    const fs::path dir = fs::temp_directory_path() / "sodsynth_acceptance_det";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string cli = SODSYNTH_CLI_PATH;
    auto run = [&](const std::string& args) {
        const std::string cmd = cli + " " + args + " >/dev/null 2>&1";
        return WEXITSTATUS(std::system(cmd.c_str()));
    };
    const std::string data = (dir / "data").string();
    bool ok = run("gen-toy --out " + data + " --n 6 --seed 77") == 0;
    const std::string opts =
        " --seed 7 --set train.epochs=2 --set train.batch_size=2 --set synth.n_variants=3"
        " --set train.threads=1";
    ok = ok && run("train --data " + data + " --out " + (dir / "a").string() + opts) == 0;
    ok = ok && run("train --data " + data + " --out " + (dir / "b").string() + opts) == 0;

    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    const bool reports_equal =
        ok && slurp(dir / "a" / "report.txt") == slurp(dir / "b" / "report.txt");
    const bool ckpts_equal =
        ok && slurp(dir / "a" / "final.ckpt") == slurp(dir / "b" / "final.ckpt");
    report(7, "cmd_train determinism (byte-identical report and checkpoint)",
           ok && reports_equal && ckpts_equal,
           std::string("reports ") + (reports_equal ? "identical" : "differ") + ", checkpoints " +
               (ckpts_equal ? "identical" : "differ"));
}

// ---- criterion 8: learning-rate schedule ----

void criterion_lr_schedule() {
    TrainConfig config; // lr_min 1e-5, lr_max 5e-3, peak fraction 0.25
    const int total = 1100;
    std::vector<double> trace;
    for (int s = 0; s < total; ++s) trace.push_back(triangular_lr(s, total, config));

    bool ok = trace.front() == 1e-5 && trace.back() == 1e-5;
    const auto peak_it = std::max_element(trace.begin(), trace.end());
    ok = ok && *peak_it == 5e-3;
    const int peak = static_cast<int>(peak_it - trace.begin());
    // piecewise linear on both sides of the peak
    for (int s = 1; s <= peak && ok; ++s) {
        const double expected = 1e-5 + (5e-3 - 1e-5) * (static_cast<double>(s) / peak);
        if (std::fabs(trace[static_cast<std::size_t>(s)] - expected) > 1e-15) ok = false;
    }
    for (int s = peak; s < total - 1 && ok; ++s) {
        const double expected =
            1e-5 + (5e-3 - 1e-5) * (static_cast<double>(total - 1 - s) / (total - 1 - peak));
        if (std::fabs(trace[static_cast<std::size_t>(s)] - expected) > 1e-15) ok = false;
    }
    report(8, "triangular lr schedule endpoints/peak/linearity", ok,
           "lr[0] = " + fmt(trace.front()) + ", peak " + fmt(*peak_it) + " at step " +
               std::to_string(peak) + ", lr[last] = " + fmt(trace.back()));
}

} // namespace

int main() {
    std::printf("sodsynth acceptance suite\n");
    criterion_gradients();
    criterion_synthesis_geometry();
    criterion_halfwidth_spot();
    criterion_loss_identities();
    criterion_metric_oracles();
    criterion_ablation_trend();
    criterion_determinism();
    criterion_lr_schedule();
    std::printf("%s\n", failures == 0 ? "acceptance: ALL CRITERIA PASSED"
                                      : "acceptance: FAILURES PRESENT");
    return failures == 0 ? 0 : 1;
}
