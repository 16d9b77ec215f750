// sodsynth command-line driver: toy data generation, synthetic-image
// generation, training, evaluation and the gradient-check suite.
#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "sodsynth/dataset.hpp"
#include "sodsynth/gradcheck_suite.hpp"
#include "sodsynth/metrics.hpp"
#include "sodsynth/png_io.hpp"
#include "sodsynth/rng.hpp"
#include "sodsynth/runconfig.hpp"
#include "sodsynth/synthgen.hpp"
#include "sodsynth/trainer.hpp"

namespace fs = std::filesystem;
using namespace sodsynth;

namespace {

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

LogLevel log_level() {
    const char* env = std::getenv("SODSYNTH_LOG");
    if (!env) return LogLevel::Info;
    const std::string v(env);
    if (v == "quiet") return LogLevel::Quiet;
    if (v == "debug") return LogLevel::Debug;
    return LogLevel::Info;
}

void log_info(const std::string& msg) {
    if (log_level() >= LogLevel::Info) std::cerr << msg << "\n";
}

RunConfig resolve_config(const std::string& config_path,
                         const std::vector<std::string>& overrides) {
    RunConfig config;
    if (!config_path.empty()) config = parse_config_file(config_path);
    for (const auto& assignment : overrides) apply_override(config, assignment);
    return config;
}

void write_config_echo(const RunConfig& config, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream out(out_dir / "config_echo.txt");
    if (!out) throw IoError("cannot write config echo under '" + out_dir.string() + "'");
    out << echo_config(config);
}

std::string fmt_metric(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

// ---- gen-toy ----

int cmd_gen_toy(const std::string& out_dir, int n, int size, std::uint64_t seed,
                const RunConfig& config) {
    auto samples = generate_toy_dataset(n, size, seed);
    write_toy_dataset(samples, out_dir);
    write_config_echo(config, out_dir);
    log_info("gen-toy: wrote " + std::to_string(samples.size()) + " samples to " + out_dir);
    return 0;
}

// ---- synth ----

int cmd_synth(const std::string& manifest_path, const std::string& out_dir, int variants,
              std::uint64_t seed, RunConfig config) {
    config.synth.n_variants = variants;
    auto dataset = load_dataset(manifest_path);
    const DatasetManifest source_manifest = read_manifest(manifest_path);
    const fs::path manifest_dir = fs::absolute(fs::path(manifest_path)).parent_path();
    const fs::path out(out_dir);
    fs::create_directories(out);
    write_config_echo(config, out);

    DatasetManifest manifest;
    std::vector<std::string> failures;
    std::size_t total_variants = 0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& loaded = dataset[i];
        ManifestEntry entry;
        entry.id = loaded.sample.id;

        // keep pointing at the source images, relative to the new manifest
        auto rel = [&](const std::string& original_rel) {
            return fs::relative(manifest_dir / original_rel, out).string();
        };
        const auto& original = source_manifest.entries[i];
        entry.image_path = rel(original.image_path);
        entry.label_path = rel(original.label_path);
        if (!original.gt_path.empty()) entry.gt_path = rel(original.gt_path);

        const fs::path variant_dir = out / "synthetic" / loaded.sample.id;
        bool any = false;
        for (int j = 0; j < variants; ++j) {
            try {
                SyntheticSample synth =
                    synthesize(loaded.sample, config.synth,
                               mix64(seed, i, static_cast<std::uint64_t>(j)));
                if (!any) fs::create_directories(variant_dir);
                any = true;
                const std::string stem = "variant_" + std::to_string(j);
                save_png(synth.image, (variant_dir / (stem + ".png")).string());
                save_scribble(synth.label, (variant_dir / (stem + "_label.png")).string());
                save_png(synth.concave_mask, (variant_dir / (stem + "_mask.png")).string());
                save_synth_meta(synth, (variant_dir / (stem + "_meta.txt")).string());
                entry.synthetic_paths.push_back("synthetic/" + loaded.sample.id + "/" + stem +
                                                ".png");
                ++total_variants;
            } catch (const GenerationError& e) {
                failures.push_back(loaded.sample.id + " variant " + std::to_string(j) + ": " +
                                   e.what());
            }
        }
        manifest.entries.push_back(std::move(entry));
    }
    write_manifest(manifest, (out / "manifest.txt").string());
    if (!failures.empty()) {
        std::ofstream err(out / "synth_errors.txt");
        for (const auto& f : failures) err << f << "\n";
        log_info("synth: " + std::to_string(failures.size()) + " generation failures recorded");
    }
    log_info("synth: wrote " + std::to_string(total_variants) + " variants for " +
             std::to_string(manifest.entries.size()) + " images to " + out_dir);
    return 0;
}

// ---- train ----

int cmd_train(const std::string& data_dir, const std::string& out_dir, bool baseline,
              const std::string& resume_path, int stop_epoch, RunConfig config) {
    if (baseline) {
        config.train.use_bab = false;
        config.train.use_sc = false;
    }
    config.validate();

    const fs::path manifest_path = fs::path(data_dir) / "manifest.txt";
    auto loaded = load_dataset(manifest_path.string());
    if (loaded.empty()) throw UsageError("train: dataset '" + data_dir + "' is empty");

    std::vector<TrainInput> inputs;
    for (auto& sample : loaded) {
        TrainInput input;
        input.base.sample = std::move(sample.sample);
        if (sample.has_ground_truth) input.base.ground_truth = std::move(sample.ground_truth);
        for (const auto& variant_path : sample.synthetic_paths)
            input.variants.push_back(load_synthetic_variant(variant_path));
        inputs.push_back(std::move(input));
    }

    Checkpoint resume;
    const Checkpoint* resume_ptr = nullptr;
    if (!resume_path.empty()) {
        resume = load_checkpoint(resume_path);
        resume_ptr = &resume;
    }

    const std::string echo = echo_config(config);
    TrainResult result = train(inputs, config.train, config.loss, config.synth, resume_ptr,
                               stop_epoch, echo);

    fs::create_directories(out_dir);
    write_config_echo(config, out_dir);
    write_report(result.report, (fs::path(out_dir) / "report.txt").string());
    save_checkpoint(result.checkpoint, (fs::path(out_dir) / "final.ckpt").string());

    // wall time intentionally lives outside the deterministic report
    std::ofstream timing(fs::path(out_dir) / "timing.txt");
    timing << "wall_seconds " << result.report.wall_seconds << "\n";

    const auto& final_eval = result.report.final_eval;
    std::cout << "train: " << result.report.steps.size() << " steps, holdout "
              << result.report.holdout_count << " images\n";
    std::cout << "final s_measure " << fmt_metric(final_eval.s_measure) << " fbeta "
              << fmt_metric(final_eval.mean_fbeta) << " mae " << fmt_metric(final_eval.mae)
              << " e_measure " << fmt_metric(final_eval.e_measure) << "\n";
    log_info("train: wall " + std::to_string(result.report.wall_seconds) + " s");
    return 0;
}

// ---- eval ----

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir,
             const std::string& out_file) {
    auto collect = [](const std::string& dir) {
        std::map<std::string, fs::path> files;
        if (!fs::is_directory(dir)) throw UsageError("eval: '" + dir + "' is not a directory");
        for (const auto& entry : fs::directory_iterator(dir))
            if (entry.path().extension() == ".png") files[entry.path().stem().string()] = entry;
        if (files.empty()) throw UsageError("eval: no PNG files in '" + dir + "'");
        return files;
    };
    auto preds = collect(pred_dir);
    auto gts = collect(gt_dir);

    std::vector<std::string> unmatched;
    for (const auto& [id, path] : preds)
        if (!gts.count(id)) unmatched.push_back("pred-only: " + id);
    for (const auto& [id, path] : gts)
        if (!preds.count(id)) unmatched.push_back("gt-only: " + id);
    if (!unmatched.empty()) {
        std::string msg = "eval: unmatched filenames:";
        for (const auto& u : unmatched) msg += " " + u;
        throw UsageError(msg);
    }

    std::ofstream out(out_file);
    if (!out) throw IoError("cannot open '" + out_file + "' for writing");

    std::vector<GrayImage> pred_maps;
    std::vector<BinaryMask> gt_masks;
    std::vector<std::string> ids;
    for (const auto& [id, path] : preds) {
        pred_maps.push_back(load_png_gray(path.string()));
        GrayImage gt_img = load_png_gray(gts[id].string());
        BinaryMask mask(gt_img.height, gt_img.width);
        for (std::size_t i = 0; i < gt_img.values.size(); ++i)
            mask.values[i] = gt_img.values[i] > 0.5;
        gt_masks.push_back(std::move(mask));
        ids.push_back(id);
    }

    for (std::size_t i = 0; i < ids.size(); ++i) {
        const double m = mae(pred_maps[i], gt_masks[i]);
        const double s = s_measure(pred_maps[i], gt_masks[i]);
        const double e = e_measure(pred_maps[i], gt_masks[i]);
        const bool has_fg = !gt_masks[i].empty_mask();
        const double f = has_fg ? mean_fbeta(pred_maps[i], gt_masks[i]) : 0.0;
        out << "image " << ids[i] << " s_measure " << fmt_metric(s) << " fbeta "
            << (has_fg ? fmt_metric(f) : std::string("n/a")) << " mae " << fmt_metric(m)
            << " e_measure " << fmt_metric(e) << "\n";
    }
    DatasetEval aggregate = evaluate_dataset(pred_maps, gt_masks);
    out << "aggregate s_measure " << fmt_metric(aggregate.mean.s_measure) << " fbeta "
        << fmt_metric(aggregate.mean.mean_fbeta) << " mae " << fmt_metric(aggregate.mean.mae)
        << " e_measure " << fmt_metric(aggregate.mean.e_measure) << " images "
        << aggregate.n_images << " fbeta_excluded " << aggregate.fbeta_excluded << "\n";
    std::cout << "eval: " << aggregate.n_images << " images, aggregate fbeta "
              << fmt_metric(aggregate.mean.mean_fbeta) << "\n";
    return 0;
}

// ---- gradcheck ----

int cmd_gradcheck(std::uint64_t seed, int instances) {
    GradSuiteResult suite = run_gradcheck_suite(seed, instances);
    for (const auto& r : suite.reports) {
        const bool expected_fail = r.op_name == "negative_control";
        std::printf("%-24s rel %.3e abs %.3e %s%s\n", r.op_name.c_str(), r.max_rel_error,
                    r.max_abs_error, r.passed ? "PASS" : "FAIL",
                    expected_fail ? " (expected FAIL: checker self-test)" : "");
    }
    std::printf("gradcheck: %s\n", suite.all_passed ? "all checks passed" : "FAILURES");
    return suite.all_passed ? 0 : 2;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"scribble-supervised saliency with synthetic boundary supervision"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_dir, manifest_path, pred_dir, gt_dir, out_file;
    std::string resume_path;
    std::vector<std::string> overrides;
    int n = 0, size = 64, variants = 10, stop_epoch = -1, instances = 20, threads = 0;
    std::uint64_t seed = 0;
    bool baseline = false;
    bool have_seed = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "plain-text config file");
        cmd->add_option("--set", overrides, "override, e.g. --set train.epochs=10");
        cmd->add_option_function<std::uint64_t>(
               "--seed", [&](const std::uint64_t& v) {
                   seed = v;
                   have_seed = true;
               },
               "master seed");
    };

    auto* gen = app.add_subcommand("gen-toy", "generate the toy scribble corpus");
    gen->add_option("--out", out_dir, "output directory")->required();
    gen->add_option("--n", n, "number of samples")->required();
    gen->add_option("--size", size, "image size (square)");
    add_common(gen);

    auto* synth = app.add_subcommand("synth", "precompute synthetic variants");
    synth->add_option("--manifest", manifest_path, "dataset manifest")->required();
    synth->add_option("--out", out_dir, "output directory")->required();
    synth->add_option("--variants", variants, "variants per image");
    add_common(synth);

    auto* train_cmd = app.add_subcommand("train", "train the detector");
    train_cmd->add_option("--data", data_dir, "dataset directory (with manifest.txt)")
        ->required();
    train_cmd->add_option("--out", out_dir, "output directory")->required();
    train_cmd->add_flag("--baseline", baseline, "GIB-only baseline (no BAB, no SC)");
    train_cmd->add_option("--resume", resume_path, "checkpoint to resume from");
    train_cmd->add_option("--stop-epoch", stop_epoch, "stop after this many epochs");
    train_cmd->add_option("--threads", threads, "batch-parallel workers");
    add_common(train_cmd);

    auto* eval_cmd = app.add_subcommand("eval", "score predictions against ground truth");
    eval_cmd->add_option("--pred", pred_dir, "directory of prediction PNGs")->required();
    eval_cmd->add_option("--gt", gt_dir, "directory of ground-truth PNGs")->required();
    eval_cmd->add_option("--out", out_file, "output report file")->required();

    auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every loss op");
    grad->add_option("--instances", instances, "random instances per op");
    add_common(grad);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        RunConfig config = resolve_config(config_path, overrides);
        if (have_seed) config.train.seed = seed;
        if (threads > 0) config.train.threads = threads;

        if (gen->parsed()) {
            if (n < 1) throw UsageError("gen-toy: --n must be >= 1");
            return cmd_gen_toy(out_dir, n, size, config.train.seed, config);
        }
        if (synth->parsed())
            return cmd_synth(manifest_path, out_dir, variants, config.train.seed, config);
        if (train_cmd->parsed())
            return cmd_train(data_dir, out_dir, baseline, resume_path, stop_epoch, config);
        if (eval_cmd->parsed()) return cmd_eval(pred_dir, gt_dir, out_file);
        if (grad->parsed()) return cmd_gradcheck(config.train.seed, instances);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ParameterError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
