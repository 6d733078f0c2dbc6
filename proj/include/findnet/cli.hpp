#pragma once

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "findnet/checkpoint.hpp"
#include "findnet/config.hpp"
#include "findnet/ctsim.hpp"
#include "findnet/metrics.hpp"
#include "findnet/opchecks.hpp"

namespace findnet {
namespace cli {

namespace fs = std::filesystem;

// Exit-code contract: 0 success, 1 verification/quality failure,
// 2 usage/config error.
constexpr int kOk = 0;
constexpr int kQualityFailure = 1;
constexpr int kUsageError = 2;

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

inline int cmd_generate(const std::string& config_path, const std::string& out_override,
                        std::optional<uint64_t> seed_override) {
    config::GenerateConfig cfg = config::generate_config_from_json(
        config::parse_json_text(io::read_text_file(config_path), config_path));
    if (seed_override) cfg.seed = *seed_override;
    const std::string out = out_override.empty() ? cfg.out_dir : out_override;
    if (out.empty()) throw ConfigError("generate: no output directory (set out_dir or pass --out)");

    ctsim::GenerationReport rep = ctsim::write_dataset(out, cfg);
    std::printf("dataset %s: %lld samples\n", out.c_str(), static_cast<long long>(rep.written));
    for (const char* cls : {"large", "medium", "small"})
        std::printf("  %s: %lld\n", cls,
                    static_cast<long long>(rep.class_counts.count(cls) ? rep.class_counts.at(cls) : 0));
    for (const std::string& f : rep.failures) std::printf("  failed %s\n", f.c_str());
    if (rep.short_split) {
        std::printf("error: split is short (%lld generated)\n", static_cast<long long>(rep.written));
        return kQualityFailure;
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainFlags {
    bool no_gaussian = false;
    bool alpha_zero = false;
    bool resume = false;
    std::optional<uint64_t> seed;
    std::optional<std::string> out;
    int64_t stop_after_epochs = 0;  // 0 = run to completion (testing hook)
    bool verbose = false;
};

inline int cmd_train(const std::string& config_path, const TrainFlags& flags) {
    config::TrainConfig cfg =
        config::train_config_from_json(config::parse_json_text(io::read_text_file(config_path), config_path));
    if (flags.no_gaussian) cfg.model.use_gaussian = false;
    if (flags.alpha_zero) cfg.model.alpha_zero = true;
    if (flags.seed) cfg.seed = *flags.seed;
    if (flags.out) cfg.out_dir = *flags.out;
    if (cfg.out_dir.empty()) throw ConfigError("train: no output directory (set out_dir or pass --out)");

    std::vector<CTSample> train_set = ctsim::load_split(cfg.data_dir, "train");
    std::vector<CTSample> val_set = ctsim::load_split(cfg.data_dir, "val");
    if (train_set.empty() || val_set.empty()) throw DataError("train: empty train or val split");
    const int64_t h = train_set[0].Y.extent(1), w = train_set[0].Y.extent(2);
    require_pow2_hw(h, w, "train");

    training::TrainSettings settings;
    settings.seed = cfg.seed;
    settings.epochs = cfg.epochs;
    settings.patience = cfg.patience;
    settings.min_delta = cfg.min_delta;
    settings.optimizer = cfg.optimizer;
    settings.schedule = cfg.schedule;
    settings.loss = cfg.loss;
    settings.stop_after_epoch = flags.stop_after_epochs;
    settings.verbose = flags.verbose;

    Rng rng(cfg.seed);
    model::FindNetParams params(cfg.model, rng);
    training::FitCarry carry;
    training::FitCarry* carry_ptr = nullptr;
    const fs::path out_dir(cfg.out_dir);
    if (flags.resume) {
        checkpoint::load_train_state(out_dir / "train_state", params, carry, cfg.optimizer);
        const checkpoint::Json want = checkpoint::model_config_json(cfg.model);
        const checkpoint::Json have = checkpoint::model_config_json(params.cfg);
        if (want != have) throw ConfigError("train --resume: model config does not match saved state");
        carry_ptr = &carry;
    }

    auto on_epoch = [&](const model::FindNetParams& current, const training::FitCarry& c) {
        model::FindNetParams snapshot = current;  // non-const copy for serialization
        training::FitCarry state = c;
        checkpoint::save_train_state(out_dir / "train_state", snapshot, state);
    };

    training::FitResult result = training::fit(train_set, val_set, params, settings, carry_ptr, on_epoch);

    checkpoint::CheckpointMeta meta;
    meta.model = cfg.model;
    meta.h = h;
    meta.w = w;
    meta.trained_steps = result.history.rows.empty() ? 0 : result.history.rows.back().step;
    checkpoint::save_checkpoint(out_dir / "best", result.best, meta);
    checkpoint::save_checkpoint(out_dir / "final", params, meta);
    io::write_text_file(out_dir / "history.csv", checkpoint::history_csv(result.history));
    std::printf("best val loss %.17g (epoch %lld); checkpoints in %s\n", result.best_val,
                static_cast<long long>(result.best_epoch), cfg.out_dir.c_str());
    return kOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalFlags {
    std::string model_kind = "checkpoint";  // checkpoint | li | oracle
    std::string checkpoint_dir;
    std::string data_dir;
    std::string split = "test";
    std::string baseline_csv;
    std::string out_dir = ".";
};

inline int cmd_eval(const EvalFlags& flags) {
    if (flags.data_dir.empty()) throw ConfigError("eval: missing --data");
    std::vector<CTSample> split = ctsim::load_split(flags.data_dir, flags.split);

    metrics::Predictor predict;
    std::optional<checkpoint::LoadedCheckpoint> loaded;
    if (flags.model_kind == "li") {
        predict = [](const CTSample& s) { return s.X0; };
    } else if (flags.model_kind == "oracle") {
        predict = [](const CTSample& s) { return s.X_gt; };
    } else if (flags.model_kind == "checkpoint") {
        if (flags.checkpoint_dir.empty()) throw ConfigError("eval: missing --checkpoint");
        loaded = checkpoint::load_checkpoint(flags.checkpoint_dir);
        if (loaded->meta.h != 0 &&
            (loaded->meta.h != split[0].Y.extent(1) || loaded->meta.w != split[0].Y.extent(2)))
            throw ConfigError("eval: checkpoint geometry " + std::to_string(loaded->meta.h) + "x" +
                              std::to_string(loaded->meta.w) + " does not match dataset");
        predict = [&loaded](const CTSample& s) {
            Tape t;
            model::StageTrace tr = model::findnet_forward(t, s, loaded->params, Mode::infer);
            return tr.x(tr.n_stages());
        };
    } else {
        throw ConfigError("eval: unknown --model '" + flags.model_kind + "'");
    }

    metrics::MetricsReport rep = metrics::evaluate_with(predict, split);
    std::optional<metrics::MetricsReport> baseline;
    if (!flags.baseline_csv.empty())
        baseline = metrics::report_from_csv(io::read_text_file(flags.baseline_csv));

    fs::create_directories(flags.out_dir);
    io::write_text_file(fs::path(flags.out_dir) / "report.csv", metrics::report_csv(rep));
    const std::string summary = metrics::summary_csv(rep, baseline ? &*baseline : nullptr);
    io::write_text_file(fs::path(flags.out_dir) / "summary.csv", summary);
    std::fputs(summary.c_str(), stdout);
    return kOk;
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

struct InferFlags {
    std::string checkpoint_dir;
    std::string y_path, i_path, x0_path;
    std::string out_dir = ".";
    std::vector<int64_t> stages;  // empty = final stage only
    double window = 1.0;
    double level = 0.5;
};

inline int cmd_infer(const InferFlags& flags) {
    if (flags.checkpoint_dir.empty() || flags.y_path.empty() || flags.i_path.empty() || flags.x0_path.empty())
        throw ConfigError("infer: --checkpoint, --y, --i and --x0 are required");
    checkpoint::LoadedCheckpoint ckpt = checkpoint::load_checkpoint(flags.checkpoint_dir);

    auto load_image = [](const std::string& p) {
        Tensor t = io::read_fnt_file(p);
        if (t.rank() == 2) t = t.reshaped({1, t.extent(0), t.extent(1)});
        if (t.rank() != 3 || t.extent(0) != 1)
            throw DataError(p + ": expected a [H,W] or [1,H,W] image, got " + shape_str(t.shape()));
        return t;
    };
    CTSample s;
    s.id = "infer";
    s.Y = load_image(flags.y_path);
    s.I = load_image(flags.i_path);
    s.X0 = load_image(flags.x0_path);
    s.X_gt = s.Y;  // unused by the forward pass; keeps validation happy
    for (int64_t i = 0; i < s.I.numel(); ++i) s.I[i] = s.I[i] >= 0.5 ? 1.0 : 0.0;
    if (ckpt.meta.h != 0 && (ckpt.meta.h != s.Y.extent(1) || ckpt.meta.w != s.Y.extent(2)))
        throw ConfigError("infer: checkpoint geometry does not match the input images");

    Tape t;
    model::StageTrace trace = model::findnet_forward(t, s, ckpt.params, Mode::infer);
    const int64_t S = trace.n_stages();
    std::vector<int64_t> stages = flags.stages;
    if (stages.empty()) stages.push_back(S);
    fs::create_directories(flags.out_dir);
    for (int64_t st : stages) {
        if (st < 0 || st > S) throw ConfigError("infer: stage " + std::to_string(st) + " out of range 0.." +
                                                std::to_string(S));
        const std::string tag = std::to_string(st);
        io::write_fnt_file(fs::path(flags.out_dir) / ("X" + tag + ".fnt"), trace.x(st));
        io::write_pgm16(fs::path(flags.out_dir) / ("X" + tag + ".pgm"), trace.x(st), flags.window, flags.level);
        if (st >= 1) {
            io::write_fnt_file(fs::path(flags.out_dir) / ("A" + tag + ".fnt"), trace.a(st));
            io::write_pgm16(fs::path(flags.out_dir) / ("A" + tag + ".pgm"), trace.a(st), flags.window,
                            flags.level);
        }
        std::printf("stage %lld written\n", static_cast<long long>(st));
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

inline int cmd_gradcheck(const std::string& break_op = "") {
    Tape::break_op() = break_op;
    std::vector<opchecks::OpCheck> checks = opchecks::all_checks();
    bool all_ok = true;
    std::string first_failure;
    std::printf("%-24s %12s  %s\n", "operator", "max_rel_err", "status");
    for (auto& c : checks) {
        const double err = c.run();
        const bool ok = err < c.threshold;
        if (!ok && first_failure.empty()) first_failure = c.name;
        all_ok = all_ok && ok;
        std::printf("%-24s %12.3e  %s\n", c.name.c_str(), err, ok ? "pass" : "FAIL");
    }
    Tape::break_op().clear();
    if (!all_ok) {
        std::printf("gradcheck FAILED: %s\n", first_failure.c_str());
        return kQualityFailure;
    }
    std::printf("gradcheck passed (%zu rows)\n", checks.size());
    return kOk;
}

}  // namespace cli
}  // namespace findnet
