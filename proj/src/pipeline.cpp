#include "robermix/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "robermix/errors.hpp"
#include "robermix/version.hpp"

namespace robermix {

namespace fs = std::filesystem;

void ensure_directory(const std::string& path) {
    std::error_code ec;
    fs::create_directories(path, ec);
    if (ec) throw IoError("cannot create directory " + path + ": " + ec.message());
}

TimeSeries run_generate(const ExperimentConfig& config, const std::string& out_dir) {
    config.validate();
    ensure_directory(out_dir);
    save_config(config, out_dir + "/config.json");

    const RoberSystem system(config.kinetics.rates);
    const TimeSpan span{config.kinetics.t0, config.kinetics.t_end};
    const Trajectory traj =
        integrate_stiff(system, config.kinetics.y0, span, config.kinetics.tol);

    const SamplingSpec spec{config.kinetics.dt, config.kinetics.t0, config.kinetics.t_end};
    TimeSeries series = sample(traj, spec, {"y1", "y2", "y3"}, config.kinetics.tol.atol);
    write_csv(series, out_dir + "/data.csv");

    DatasetMeta meta;
    meta.rates = config.kinetics.rates;
    meta.y0 = config.kinetics.y0;
    meta.tol = config.kinetics.tol;
    meta.t0 = config.kinetics.t0;
    meta.t_end = config.kinetics.t_end;
    meta.dt = config.kinetics.dt;
    meta.generator_version = kVersion;
    write_meta(meta, out_dir + "/data.meta.json");
    return series;
}

FitResult run_train(const ExperimentConfig& config, const std::string& data_csv,
                    const std::string& out_dir) {
    config.validate();
    ensure_directory(out_dir);
    save_config(config, out_dir + "/config.json");

    const TimeSeries series = read_csv(data_csv);
    if (series.channels() != config.model.channels)
        throw ConfigError("model.channels does not match the dataset channel count");

    const SplitResult split = chronological_split(series, config.split);
    const NormalizationStats norm = fit_normalizer(split.train);
    const TimeSeries train_n = norm.normalize(split.train);
    const TimeSeries val_n = norm.normalize(split.val);

    const std::size_t H = config.model.context_length;
    const std::size_t h = config.model.horizon;
    const std::size_t val_stride = config.val_stride == 0 ? h : config.val_stride;
    const WindowSet train_w = make_windows(train_n, H, h, config.window_stride);
    const WindowSet val_w = make_windows(val_n, H, h, val_stride);

    Parameters params = init_params(config.model, config.train.seed);
    CheckpointContext ctx{norm, series.dt(), series.channel_names};
    FitResult result = fit(params, WindowedData{&train_n, &train_w},
                           WindowedData{&val_n, &val_w}, config.train, ctx);

    save_checkpoint(result.best, out_dir + "/best.ckpt");
    save_checkpoint(result.last, out_dir + "/last.ckpt");
    write_history_csv(result.history, out_dir + "/history.csv");
    return result;
}

ForecastReport run_eval(const ExperimentConfig& config, const std::string& checkpoint_path,
                        const std::string& data_csv, const std::string& mode,
                        const std::string& out_dir) {
    if (mode != "batchwise" && mode != "dynamic")
        throw ConfigError("eval mode must be batchwise or dynamic");
    config.validate();
    ensure_directory(out_dir);
    save_config(config, out_dir + "/config.json");

    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    const TimeSeries series = read_csv(data_csv);
    if (series.channels() != ckpt.model.channels)
        throw ConfigError("channel count mismatch: checkpoint expects " +
                          std::to_string(ckpt.model.channels) + ", data has " +
                          std::to_string(series.channels()));
    const double dt = series.dt();
    if (std::fabs(dt - ckpt.data_dt) > 1.0e-9 * std::fabs(ckpt.data_dt))
        throw ConfigError("sampling interval mismatch: checkpoint was trained at dt=" +
                          std::to_string(ckpt.data_dt) + ", data has dt=" +
                          std::to_string(dt));

    const SplitResult split = chronological_split(series, config.split);
    const EvalRange range{split.test_begin, series.length()};

    ForecastReport report = mode == "dynamic" ? dynamic_forecast(ckpt, series, range)
                                              : batchwise_forecast(ckpt, series, range);
    report.checkpoint_hash = file_hash(checkpoint_path);

    export_report(report, out_dir + "/report_" + mode + ".json",
                  out_dir + "/report_" + mode + ".csv");
    write_csv(report.forecast, out_dir + "/forecast_" + mode + ".csv");

    const TimeSeries truth =
        series.slice(report.batches.front().origin,
                     report.batches.back().origin + ckpt.model.horizon);
    plot_series({{"ground truth", &truth}, {"forecast", &report.forecast}},
                out_dir + "/plot_" + mode + ".svg");

    std::printf("mean=%.4f%% std=%.4f%%\n", report.mean_error, report.std_error);
    return report;
}

void run_plot(const std::vector<std::string>& csv_paths, const std::string& out_svg) {
    if (csv_paths.empty()) throw ConfigError("plot needs at least one series");
    std::vector<TimeSeries> series;
    series.reserve(csv_paths.size());
    for (const auto& path : csv_paths) series.push_back(read_csv(path));
    std::vector<NamedSeries> named;
    for (std::size_t i = 0; i < series.size(); ++i)
        named.push_back(NamedSeries{fs::path(csv_paths[i]).filename().string(), &series[i]});
    plot_series(named, out_svg);
}

}  // namespace robermix
