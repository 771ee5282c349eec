// Copyright 2026 The RDN-SR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "rdn/checkpoint.hpp"
#include "rdn/config.hpp"
#include "rdn/data.hpp"
#include "rdn/errors.hpp"
#include "rdn/gradcheck.hpp"
#include "rdn/image.hpp"
#include "rdn/metrics.hpp"
#include "rdn/model.hpp"
#include "rdn/train.hpp"

// Subcommands of the `rdn` tool. Exit codes: 0 success, 1 numerical or
// assertion failure, 2 usage/config/input error.
namespace rdn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

namespace fs = std::filesystem;

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
};

inline RunConfig resolve_config(const CommonArgs& args, RunConfig base = {}) {
    if (!args.config_path.empty()) load_config_file(base, args.config_path);
    for (const auto& o : args.overrides) apply_override(base, o);
    if (args.seed) base.train.seed = *args.seed;
    return base;
}

inline void check_scale(std::size_t scale) {
    if (scale < 2 || scale > 4) throw ConfigError("scale must be 2, 3 or 4, got " + std::to_string(scale));
}

inline void append_line(const fs::path& path, const std::string& header, const std::string& line) {
    const bool fresh = !fs::exists(path);
    std::ofstream out(path, std::ios::app);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    if (fresh) out << header << '\n';
    out << line << '\n';
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
}

// ---------------------------------------------------------------- degrade

inline int cmd_degrade(const std::string& manifest_path, std::size_t scale, const std::string& outdir, std::ostream& out,
                       std::ostream& err) {
    check_scale(scale);
    const DatasetManifest manifest = load_manifest(manifest_path);
    fs::create_directories(outdir);
    std::size_t failures = 0;
    for (const auto& path : manifest.paths) {
        const fs::path target = fs::path(outdir) / (fs::path(path).stem().string() + "_x" + std::to_string(scale) + ".png");
        try {
            const ImagePair pair = make_image_pair(load_image(path), scale, path);
            save_image(target.string(), pair.lr);
            out << path << " -> " << target.string() << " (" << pair.lr.shape().w << "x" << pair.lr.shape().h << ")\n";
        } catch (const Error& e) {
            err << "degrade: " << path << ": " << e.what() << '\n';
            ++failures;
        }
    }
    return failures == 0 ? kExitOk : kExitUsage;
}

// ---------------------------------------------------------------- train

struct TrainOutcome {
    Checkpoint final_checkpoint;
    fs::path checkpoint_path;
};

inline Trainer make_trainer(const RunConfig& cfg, const std::string& manifest_path) {
    cfg.model.validate();
    cfg.train.validate();
    const DatasetManifest manifest = load_manifest(manifest_path, DatasetRole::train);
    const auto pairs = load_pairs(manifest, cfg.model.scale);
    return Trainer(cfg.model, cfg.train, training_patches(pairs, cfg.train));
}

// Trains until cfg.train.epochs epochs have completed, writing checkpoints,
// a CSV loss log and the effective configuration into `outdir`.
inline TrainOutcome run_training(const RunConfig& cfg, const std::string& manifest_path, const std::string& outdir,
                                 const std::optional<Checkpoint>& resume, std::ostream& out) {
    fs::create_directories(outdir);
    Trainer trainer = make_trainer(cfg, manifest_path);
    if (resume) trainer.restore(*resume);
    write_text(fs::path(outdir) / "run.log", "# effective configuration\n" + run_settings(cfg) +
                                                 "manifest=" + manifest_path + "\n" +
                                                 (resume ? "resumed_at_step=" + std::to_string(resume->step) + "\n" : ""));
    const fs::path log_path = fs::path(outdir) / "loss_log.csv";
    const fs::path latest = fs::path(outdir) / "checkpoint.urdn";
    out << "training " << trainer.model_config().ablation.label() << " x" << cfg.model.scale << ": "
        << trainer.dataset_size() << " patches, " << trainer.batches_per_epoch() << " batches/epoch, "
        << trainer.weights().parameter_count() << " parameters\n";
    while (trainer.epoch() < cfg.train.epochs) {
        const EpochStats stats = trainer.train_epoch();
        char line[160];
        std::snprintf(line, sizeof line, "%zu,%llu,%.9g,%.9g", stats.epoch, static_cast<unsigned long long>(stats.end_step),
                      stats.lr, stats.mean_l1);
        append_line(log_path, "epoch,step,lr,mean_l1", line);
        out << "epoch " << stats.epoch << " step " << stats.end_step << " lr " << stats.lr << " L1 " << stats.mean_l1
            << " (" << stats.seconds << " s)\n";
        const std::size_t done = trainer.epoch();
        if (cfg.train.checkpoint_every > 0 && done % cfg.train.checkpoint_every == 0) {
            save_checkpoint((fs::path(outdir) / ("checkpoint_e" + std::to_string(done) + ".urdn")).string(),
                            trainer.checkpoint());
        }
    }
    TrainOutcome outcome{trainer.checkpoint(), latest};
    save_checkpoint(latest.string(), outcome.final_checkpoint);
    out << "saved " << latest.string() << '\n';
    return outcome;
}

// ---------------------------------------------------------------- eval / infer

inline RdnWeights<float> weights_from(const Checkpoint& ckpt) {
    RdnWeights<float> weights(ckpt.model);
    restore_parameters(ckpt, weights);
    return weights;
}

inline MetricReport evaluate_checkpoint(const Checkpoint& ckpt, const std::string& manifest_path, std::size_t scale,
                                        const EvalConfig& eval) {
    RdnWeights<float> weights = weights_from(ckpt);
    const DatasetManifest manifest = load_manifest(manifest_path, DatasetRole::test);
    EvalOptions opts;
    opts.shave = eval.shave;
    opts.luma_only = eval.luma_only;
    opts.batch = ckpt.train.batch_eval;
    return evaluate_dataset(weights, manifest, scale, opts);
}

inline int cmd_eval(const std::string& checkpoint_path, const std::string& manifest_path, std::optional<std::size_t> scale,
                    const EvalConfig& eval, const std::string& out_csv, std::ostream& out) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    const std::size_t r = scale.value_or(ckpt.model.scale);
    check_scale(r);
    const MetricReport report = evaluate_checkpoint(ckpt, manifest_path, r, eval);
    const std::string csv = report_csv(report);
    const std::string table = report_table(std::span<const MetricReport>(&report, 1));
    if (!out_csv.empty()) {
        if (fs::path(out_csv).has_parent_path()) fs::create_directories(fs::path(out_csv).parent_path());
        write_text(out_csv, csv);
        write_text(fs::path(out_csv).replace_extension(".txt"), table);
    }
    out << table;
    out << "mean PSNR " << detail::fmt(report.mean_psnr, 4) << " dB, mean SSIM " << detail::fmt(report.mean_ssim, 4)
        << " over " << report.rows.size() << " images\n";
    return kExitOk;
}

inline int cmd_infer(const std::string& checkpoint_path, const std::string& input, const std::string& output,
                     std::optional<std::size_t> scale, std::ostream& out) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    if (scale && *scale != ckpt.model.scale) {
        throw ConfigError("checkpoint was trained for x" + std::to_string(ckpt.model.scale) + ", asked for x" +
                          std::to_string(*scale));
    }
    RdnWeights<float> weights = weights_from(ckpt);
    const Image lr = load_image(input);
    const Image sr = clamp01(predict(lr, weights));
    if (fs::path(output).has_parent_path()) fs::create_directories(fs::path(output).parent_path());
    save_image(output, sr);
    out << input << " (" << lr.shape().w << "x" << lr.shape().h << ") -> " << output << " (" << sr.shape().w << "x"
        << sr.shape().h << ")\n";
    return kExitOk;
}

// ---------------------------------------------------------------- ablate

inline Ablation ablation_for(const std::string& variant) {
    Ablation a;
    if (variant == "baseline") return a;
    if (variant == "no-grl") a.disable_global_residual = true;
    else if (variant == "no-ldc") a.disable_dense_connections = true;
    else if (variant == "no-lrl") a.disable_local_residual = true;
    else throw UsageError("unknown ablation variant '" + variant + "' (baseline, no-grl, no-ldc, no-lrl)");
    return a;
}

inline int cmd_ablate(RunConfig cfg, const std::string& variant, const std::string& manifest_path,
                      const std::string& eval_manifest_path, const std::string& outdir, std::ostream& out) {
    cfg.model.ablation = ablation_for(variant);
    const fs::path dir = fs::path(outdir) / variant;
    const TrainOutcome trained = run_training(cfg, manifest_path, dir.string(), std::nullopt, out);
    const MetricReport report = evaluate_checkpoint(trained.final_checkpoint, eval_manifest_path, cfg.model.scale, cfg.eval);
    write_text(dir / "eval.csv", report_csv(report));
    append_line(fs::path(outdir) / "ablation.csv", "variant,scale,psnr_db,ssim",
                variant + "," + std::to_string(cfg.model.scale) + "," + detail::fmt(report.mean_psnr, 6) + "," +
                    detail::fmt(report.mean_ssim, 6));
    out << variant << ": PSNR " << detail::fmt(report.mean_psnr, 4) << " dB, SSIM " << detail::fmt(report.mean_ssim, 4)
        << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- gradcheck

inline int cmd_gradcheck(const ModelConfig& composite, std::uint64_t seed, const std::string& fault_op, std::ostream& out) {
    GradCheckOptions opts;
    opts.seed = seed;
    opts.fault_op = fault_op;
    const GradCheckSuite suite(composite, seed);
    bool all = true;
    for (const auto& e : suite.run(opts)) {
        char line[160];
        std::snprintf(line, sizeof line, "%-20s max_rel_err %.3e over %zu probes  %s", e.name.c_str(), e.max_rel_error,
                      e.comparisons, e.passed ? "ok" : "FAIL");
        out << line << '\n';
        all = all && e.passed;
    }
    out << (all ? "gradcheck passed" : "gradcheck FAILED") << " (tolerance " << opts.tolerance << ")\n";
    return all ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------- entry

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Residual dense network super-resolution: degrade, train, infer, evaluate, ablate"};
    app.require_subcommand(1);

    CommonArgs common;
    auto add_common = [&common](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "key = value configuration file");
        sub->add_option("--set", common.overrides, "override a configuration key (key=value), repeatable");
        sub->add_option("--seed", common.seed, "master random seed");
    };

    std::string manifest, eval_manifest, outpath, checkpoint, resume, variant, input, fault_op;
    std::optional<std::size_t> scale, epochs;
    std::size_t shave = 0;
    bool luma_only = false;

    auto* degrade = app.add_subcommand("degrade", "write bicubic-downsampled LR copies of a manifest");
    degrade->add_option("--manifest", manifest, "image list")->required();
    degrade->add_option("--scale", scale, "downsampling factor (2, 3, 4)")->required();
    degrade->add_option("--out", outpath, "output directory")->required();

    auto* train = app.add_subcommand("train", "train a model on a manifest of HR images");
    add_common(train);
    train->add_option("--manifest", manifest, "training image list")->required();
    train->add_option("--out", outpath, "run directory")->required();
    train->add_option("--epochs", epochs, "total epochs");
    train->add_option("--scale", scale, "upscaling factor");
    train->add_option("--resume", resume, "checkpoint to continue from");

    auto* resume_cmd = app.add_subcommand("resume", "continue training from a checkpoint");
    add_common(resume_cmd);
    resume_cmd->add_option("--checkpoint", checkpoint, "checkpoint to continue from")->required();
    resume_cmd->add_option("--manifest", manifest, "training image list")->required();
    resume_cmd->add_option("--out", outpath, "run directory")->required();
    resume_cmd->add_option("--epochs", epochs, "total epochs");

    auto* infer = app.add_subcommand("infer", "super-resolve one image");
    infer->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    infer->add_option("input", input, "LR input PNG")->required();
    infer->add_option("--out", outpath, "output PNG")->required();
    infer->add_option("--scale", scale, "expected upscaling factor");

    auto* eval = app.add_subcommand("eval", "score a checkpoint on a manifest");
    eval->alias("evaluate");
    eval->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    eval->add_option("--manifest", manifest, "HR test image list")->required();
    eval->add_option("--scale", scale, "degradation factor (defaults to the model's)");
    eval->add_option("--shave", shave, "crop this many border pixels before scoring");
    eval->add_flag("--luma-only", luma_only, "score BT.601 luma instead of RGB");
    eval->add_option("--out", outpath, "CSV report path (table written next to it as .txt)");

    auto* ablate = app.add_subcommand("ablate", "train and score one ablation variant");
    add_common(ablate);
    ablate->add_option("--variant", variant, "baseline, no-grl, no-ldc or no-lrl")->required();
    ablate->add_option("--manifest", manifest, "training image list")->required();
    ablate->add_option("--eval-manifest", eval_manifest, "test image list (defaults to --manifest)");
    ablate->add_option("--out", outpath, "output directory")->required();
    ablate->add_option("--epochs", epochs, "total epochs");
    ablate->add_option("--scale", scale, "upscaling factor");
    ablate->add_option("--shave", shave, "crop this many border pixels before scoring");
    ablate->add_flag("--luma-only", luma_only, "score BT.601 luma instead of RGB");

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
    add_common(gradcheck);
    gradcheck->add_option("--inject-fault", fault_op, "corrupt the adjoint of this op (self-test)")->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (degrade->parsed()) return cmd_degrade(manifest, *scale, outpath, out, err);

        if (train->parsed() || resume_cmd->parsed()) {
            if (resume_cmd->parsed()) resume = checkpoint;
            std::optional<Checkpoint> ckpt;
            RunConfig base;
            if (!resume.empty()) {
                ckpt = load_checkpoint(resume);
                base.model = ckpt->model;
                base.train = ckpt->train;
            }
            RunConfig cfg = resolve_config(common, base);
            if (scale) cfg.model.scale = *scale;
            if (epochs) cfg.train.epochs = *epochs;
            run_training(cfg, manifest, outpath, ckpt, out);
            return kExitOk;
        }

        if (infer->parsed()) return cmd_infer(checkpoint, input, outpath, scale, out);

        if (eval->parsed()) return cmd_eval(checkpoint, manifest, scale, EvalConfig{shave, luma_only}, outpath, out);

        if (ablate->parsed()) {
            RunConfig cfg = resolve_config(common);
            if (scale) cfg.model.scale = *scale;
            if (epochs) cfg.train.epochs = *epochs;
            if (shave) cfg.eval.shave = shave;
            if (luma_only) cfg.eval.luma_only = true;
            return cmd_ablate(cfg, variant, manifest, eval_manifest.empty() ? manifest : eval_manifest, outpath, out);
        }

        if (gradcheck->parsed()) {
            RunConfig base;
            base.model = gradcheck_model_config();
            const RunConfig cfg = resolve_config(common, base);
            cfg.model.validate();
            return cmd_gradcheck(cfg.model, common.seed.value_or(7), fault_op, out);
        }
    } catch (const NumericError& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}

}  // namespace rdn::cli
