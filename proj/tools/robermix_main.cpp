// robermix CLI: generate | train | eval | plot
//
// Exit codes: 0 success, 1 validation/config error, 2 numerical failure,
// 3 I/O or file-format error.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "robermix/config.hpp"
#include "robermix/errors.hpp"
#include "robermix/pipeline.hpp"
#include "robermix/version.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    long long seed = -1;
    long long threads = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "experiment config JSON");
    cmd->add_option("--set", args.overrides, "override a config value, key.path=value")
        ->take_all();
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed, "override train.seed");
    cmd->add_option("--threads", args.threads, "cap worker parallelism");
}

robermix::ExperimentConfig resolve_config(const CommonArgs& args) {
    robermix::ExperimentConfig cfg;
    if (!args.config_path.empty()) cfg = robermix::load_config(args.config_path);
    for (const auto& assignment : args.overrides) robermix::apply_override(cfg, assignment);
    if (args.seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(args.seed);
    if (args.threads >= 1) cfg.train.threads = static_cast<std::size_t>(args.threads);
    if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stiff ROBER kinetics dataset generation, mixer forecaster training "
                 "and extrapolation evaluation"};
    app.set_version_flag("--version", robermix::kVersion);
    app.require_subcommand(1);

    // --- generate ---
    auto* generate = app.add_subcommand("generate", "integrate the ODE and write the dataset");
    CommonArgs gen_args;
    add_common(generate, gen_args);
    std::string preset;
    generate->add_option("--preset", preset,
                         "initial-state preset: paper-main | appendix-b1 | appendix-b2");

    // --- train ---
    auto* train = app.add_subcommand("train", "train the forecaster on a generated dataset");
    CommonArgs train_args;
    add_common(train, train_args);
    std::string train_data;
    train->add_option("--data", train_data, "dataset CSV")->required();
    std::string profile;
    train->add_option("--profile", profile, "scale profile: paper (default) | desk");
    long long epochs = -1, context = -1, horizon = -1, patch = -1, stride = -1;
    long long embed_dim = -1, blocks = -1, batch = -1;
    double lr = -1.0, dropout = -1.0;
    train->add_option("--epochs", epochs, "training epochs");
    train->add_option("--context", context, "context length H");
    train->add_option("--horizon", horizon, "prediction horizon h");
    train->add_option("--patch", patch, "patch length p (stride follows unless overridden)");
    train->add_option("--stride", stride, "training window stride");
    train->add_option("--embed-dim", embed_dim, "embedding dimension");
    train->add_option("--blocks", blocks, "number of mixer blocks");
    train->add_option("--batch", batch, "mini-batch size");
    train->add_option("--lr", lr, "peak learning rate");
    train->add_option("--dropout", dropout, "dropout rate");

    // --- eval ---
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test region");
    CommonArgs eval_args;
    add_common(eval, eval_args);
    std::string ckpt_path, eval_data, mode = "batchwise";
    eval->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    eval->add_option("--data", eval_data, "dataset CSV")->required();
    eval->add_option("--mode", mode, "batchwise | dynamic | both");

    // --- plot ---
    auto* plot = app.add_subcommand("plot", "overlay plot of one or more series CSVs");
    std::vector<std::string> plot_paths;
    std::string plot_out = "plot.svg";
    plot->add_option("series", plot_paths, "series CSV files")->required();
    plot->add_option("--out", plot_out, "output SVG path");

    try {
        app.parse(argc, argv);

        if (generate->parsed()) {
            robermix::ExperimentConfig cfg = resolve_config(gen_args);
            if (!preset.empty()) cfg.kinetics.y0 = robermix::find_preset(preset).y0;
            cfg.validate();
            const auto series = robermix::run_generate(cfg, cfg.output_dir);
            std::printf("wrote %zu samples to %s/data.csv\n", series.length(),
                        cfg.output_dir.c_str());
        } else if (train->parsed()) {
            robermix::ExperimentConfig cfg = resolve_config(train_args);
            if (profile == "desk") {
                robermix::apply_desk_profile(cfg);
            } else if (!profile.empty() && profile != "paper") {
                throw robermix::ConfigError("unknown profile '" + profile + "'");
            }
            if (epochs >= 1) cfg.train.epochs = static_cast<std::size_t>(epochs);
            if (context >= 1) cfg.model.context_length = static_cast<std::size_t>(context);
            if (horizon >= 1) cfg.model.horizon = static_cast<std::size_t>(horizon);
            if (patch >= 1) {
                cfg.model.patch_length = static_cast<std::size_t>(patch);
                cfg.model.patch_stride = static_cast<std::size_t>(patch);
            }
            if (stride >= 1) cfg.window_stride = static_cast<std::size_t>(stride);
            if (embed_dim >= 1) cfg.model.embed_dim = static_cast<std::size_t>(embed_dim);
            if (blocks >= 1) cfg.model.num_blocks = static_cast<std::size_t>(blocks);
            if (batch >= 1) cfg.train.batch_size = static_cast<std::size_t>(batch);
            if (lr >= 0.0) cfg.train.learning_rate = lr;
            if (dropout >= 0.0) cfg.model.dropout = dropout;
            cfg.validate();
            const auto result = robermix::run_train(cfg, train_data, cfg.output_dir);
            std::printf("final train_loss=%.6e val_loss=%.6e (best epoch %zu)\n",
                        result.history.back().train_loss, result.history.back().val_loss,
                        result.best.selected_epoch);
        } else if (eval->parsed()) {
            robermix::ExperimentConfig cfg = resolve_config(eval_args);
            if (mode == "both") {
                robermix::run_eval(cfg, ckpt_path, eval_data, "batchwise", cfg.output_dir);
                robermix::run_eval(cfg, ckpt_path, eval_data, "dynamic", cfg.output_dir);
            } else {
                robermix::run_eval(cfg, ckpt_path, eval_data, mode, cfg.output_dir);
            }
        } else if (plot->parsed()) {
            robermix::run_plot(plot_paths, plot_out);
            std::printf("wrote %s\n", plot_out.c_str());
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    } catch (const robermix::IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 3;
    } catch (const robermix::FormatError& e) {
        std::fprintf(stderr, "format error: %s\n", e.what());
        return 3;
    } catch (const robermix::NonFiniteState& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 2;
    } catch (const robermix::NonFiniteError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 2;
    } catch (const robermix::StepSizeUnderflow& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 2;
    } catch (const robermix::DegenerateRange& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 2;
    } catch (const robermix::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "unexpected error: %s\n", e.what());
        return 2;
    }
}
