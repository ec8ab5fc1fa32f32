#pragma once

#include <string>

#include "robermix/config.hpp"
#include "robermix/forecast.hpp"
#include "robermix/timeseries.hpp"
#include "robermix/trainer.hpp"

namespace robermix {

// The CLI subcommands as library functions, so tests can run the exact same
// pipeline in-process. Every command echoes the resolved config it ran with
// into the output directory as config.json.

// Writes <out>/data.csv and <out>/data.meta.json. Returns the sampled series.
TimeSeries run_generate(const ExperimentConfig& config, const std::string& out_dir);

// Trains on a generated dataset; writes best.ckpt, last.ckpt, history.csv.
FitResult run_train(const ExperimentConfig& config, const std::string& data_csv,
                    const std::string& out_dir);

// Evaluates one checkpoint over the test region of the data; writes
// report_<mode>.json/.csv, forecast_<mode>.csv and plot_<mode>.svg.
// `mode` must be "batchwise" or "dynamic".
ForecastReport run_eval(const ExperimentConfig& config, const std::string& checkpoint_path,
                        const std::string& data_csv, const std::string& mode,
                        const std::string& out_dir);

// Overlay plot of one or more saved series.
void run_plot(const std::vector<std::string>& csv_paths, const std::string& out_svg);

void ensure_directory(const std::string& path);  // IoError on failure

}  // namespace robermix
