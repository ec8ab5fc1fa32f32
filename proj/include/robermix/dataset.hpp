#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "robermix/integrate.hpp"
#include "robermix/kinetics.hpp"
#include "robermix/timeseries.hpp"

namespace robermix {

// Chronological split fractions; segments keep their original order.
struct SplitSpec {
    double train = 0.6;
    double val = 0.2;
    double test = 0.2;

    void validate() const;  // each > 0, summing to 1 (within 1e-9)
};

struct SplitResult {
    TimeSeries train, val, test;
    std::size_t val_begin = 0;   // absolute sample index where the val split starts
    std::size_t test_begin = 0;  // absolute sample index where the test split starts
};

// train gets floor(f_train*T), val gets floor(f_val*T), test the remainder.
// Throws SplitError if any split would be empty.
SplitResult chronological_split(const TimeSeries& series, const SplitSpec& spec);

// Per-channel z-score statistics, fitted on the training split only.
struct NormalizationStats {
    std::vector<double> mean;
    std::vector<double> std;  // population convention, floored at 1e-12

    double normalize_value(std::size_t ch, double x) const { return (x - mean[ch]) / std[ch]; }
    double denormalize_value(std::size_t ch, double z) const { return z * std[ch] + mean[ch]; }

    TimeSeries normalize(const TimeSeries& series) const;
    TimeSeries denormalize(const TimeSeries& series) const;
};

NormalizationStats fit_normalizer(const TimeSeries& train);

// One (context, target) training example; indices into the source series.
// context covers [origin, origin + H), target [origin + H, origin + H + h).
struct WindowPair {
    std::size_t origin = 0;
};

// All windows of a series for a fixed (H, h, stride).
struct WindowSet {
    std::size_t context_len = 0;
    std::size_t horizon = 0;
    std::size_t stride = 0;
    std::vector<WindowPair> windows;

    std::size_t size() const { return windows.size(); }
};

// floor((T - H - h)/stride) + 1 windows; window i starts at i*stride.
// Throws SplitError if the series is shorter than H + h.
WindowSet make_windows(const TimeSeries& series, std::size_t context_len, std::size_t horizon,
                       std::size_t stride);

// Copies the context (channels x H) of one window into `out`, channel-major.
void copy_context(const TimeSeries& series, const WindowSet& set, std::size_t index,
                  std::vector<double>& out);

// Copies the target (channels x h) of one window into `out`, channel-major.
void copy_target(const TimeSeries& series, const WindowSet& set, std::size_t index,
                 std::vector<double>& out);

// Provenance sidecar written next to generated CSVs (`<base>.meta.json`).
struct DatasetMeta {
    RateConstants rates;
    StateVector y0{};
    ToleranceSpec tol;
    double t0 = 0.0;
    double t_end = 0.0;
    double dt = 1.0;
    std::string generator_version;
};

void write_meta(const DatasetMeta& meta, const std::string& path);
DatasetMeta read_meta(const std::string& path);

}  // namespace robermix
