#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "robermix/timeseries.hpp"
#include "robermix/trainer.hpp"

namespace robermix {

// One evaluated h-step block.
struct ForecastBatch {
    std::size_t origin = 0;       // absolute sample index of the first forecast step
    double relative_error = 0.0;  // percent
};

struct ForecastReport {
    std::string mode;     // "batchwise" | "dynamic"
    std::string formula;  // relative-error definition stamp
    std::string scale;    // error computed on "physical" values
    std::string checkpoint_hash;
    std::vector<ForecastBatch> batches;
    double mean_error = 0.0;  // percent
    double std_error = 0.0;   // percent (population)

    // Concatenated predictions over all batches, aligned to absolute indices
    // [batches.front().origin, batches.back().origin + horizon).
    TimeSeries forecast;
};

// Sample-index range [begin, end) of the evaluation region.
struct EvalRange {
    std::size_t begin = 0;
    std::size_t end = 0;
};

// 100 * mean(|pred - truth| / range_of_channel); ranges are max-min of each
// ground-truth channel over the full series and must be strictly positive.
double relative_error(std::span<const double> pred, std::span<const double> truth,
                      std::span<const double> channel_ranges, std::size_t horizon);

// max - min per channel. Throws DegenerateRange if a channel is constant.
std::vector<double> channel_ranges(const TimeSeries& series);

// Forecasts [range.begin, range.end) in consecutive horizon-sized blocks,
// each conditioned on ground-truth history (contexts may reach back before
// range.begin). Drops a trailing partial block.
ForecastReport batchwise_forecast(const Checkpoint& ckpt, const TimeSeries& series,
                                  EvalRange range);

// As above, but after the first block the model's own (normalized)
// predictions displace the oldest context entries; inherently sequential.
ForecastReport dynamic_forecast(const Checkpoint& ckpt, const TimeSeries& series,
                                EvalRange range);

// report.json (schema: mode, formula, scale, checkpoint, per-batch array,
// mean, std) plus a per-batch CSV `origin,relative_error_pct`.
void export_report(const ForecastReport& report, const std::string& json_path,
                   const std::string& csv_path);

// Reads back mean/std and the per-batch list written by export_report.
ForecastReport load_report(const std::string& json_path);

// Static SVG, one pane per channel, every series overlaid on per-channel
// min-max normalized axes. Each series contributes one polyline per pane.
struct NamedSeries {
    std::string label;
    const TimeSeries* series = nullptr;
};

void plot_series(const std::vector<NamedSeries>& list, const std::string& path);

}  // namespace robermix
