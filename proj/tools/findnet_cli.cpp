// findnet command-line driver: dataset generation, training, evaluation,
// inference and gradient verification.

#include <CLI11.hpp>

#include "findnet/cli.hpp"

using namespace findnet;

int main(int argc, char** argv) {
    CLI::App app{"findnet: unrolled proximal-gradient CT metal-artifact reduction"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "generate a synthetic CT dataset");
    std::string gen_config, gen_out;
    uint64_t seed_val = 0;
    bool seed_set = false;
    gen->add_option("--config", gen_config, "generation config JSON")->required();
    gen->add_option("--out", gen_out, "output dataset directory");
    gen->add_option("--seed", seed_val, "override the config seed")->each([&](const std::string&) {
        seed_set = true;
    });

    // train
    auto* train = app.add_subcommand("train", "train a model on a generated dataset");
    std::string train_config;
    cli::TrainFlags tf;
    std::string train_out;
    uint64_t train_seed = 0;
    bool train_seed_set = false;
    train->add_option("--config", train_config, "training config JSON")->required();
    train->add_option("--out", train_out, "override the output directory");
    train->add_option("--seed", train_seed, "override the config seed")->each([&](const std::string&) {
        train_seed_set = true;
    });
    train->add_flag("--no-gaussian", tf.no_gaussian, "disable Gaussian spectral filtering (No-GF ablation)");
    train->add_flag("--alpha-zero", tf.alpha_zero, "force alpha = 0 in every stage (plain-conv baseline)");
    train->add_flag("--resume", tf.resume, "resume from the saved training state");
    train->add_flag("--verbose", tf.verbose, "per-epoch progress on stderr");
    train->add_option("--stop-after", tf.stop_after_epochs, "stop after N epochs, leaving a resumable state");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a model over a dataset split");
    cli::EvalFlags ef;
    eval->add_option("--model", ef.model_kind, "checkpoint | li | oracle")->default_val("checkpoint");
    eval->add_option("--checkpoint", ef.checkpoint_dir, "checkpoint directory");
    eval->add_option("--data", ef.data_dir, "dataset directory")->required();
    eval->add_option("--split", ef.split, "dataset split")->default_val("test");
    eval->add_option("--baseline", ef.baseline_csv, "baseline metrics CSV for improvement columns");
    eval->add_option("--out", ef.out_dir, "output directory for report CSVs")->default_val(".");

    // infer
    auto* infer = app.add_subcommand("infer", "run a checkpoint on one sample");
    cli::InferFlags inf;
    infer->add_option("--checkpoint", inf.checkpoint_dir, "checkpoint directory")->required();
    infer->add_option("--y", inf.y_path, "corrupted image (FNT1)")->required();
    infer->add_option("--i", inf.i_path, "non-metal mask (FNT1)")->required();
    infer->add_option("--x0", inf.x0_path, "LI initialization (FNT1)")->required();
    infer->add_option("--out", inf.out_dir, "output directory")->default_val(".");
    infer->add_option("--stages", inf.stages, "stage indices to write (default: final)");
    infer->add_option("--window", inf.window, "preview window width")->default_val(1.0);
    infer->add_option("--level", inf.level, "preview window center")->default_val(0.5);

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference verification of every operator");
    std::string break_op;
    gc->add_option("--break", break_op, "debug: corrupt the named operator's adjoint");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return cli::cmd_generate(gen_config, gen_out,
                                     seed_set ? std::optional<uint64_t>(seed_val) : std::nullopt);
        if (train->parsed()) {
            if (train_seed_set) tf.seed = train_seed;
            if (!train_out.empty()) tf.out = train_out;
            return cli::cmd_train(train_config, tf);
        }
        if (eval->parsed()) return cli::cmd_eval(ef);
        if (infer->parsed()) return cli::cmd_infer(inf);
        if (gc->parsed()) return cli::cmd_gradcheck(break_op);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return cli::kUsageError;
    } catch (const DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return cli::kUsageError;
    } catch (const SizeError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return cli::kUsageError;
    } catch (const DimError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return cli::kUsageError;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return cli::kQualityFailure;
    }
    return cli::kUsageError;
}
