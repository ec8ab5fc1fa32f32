#include "robermix/dataset.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "robermix/errors.hpp"
#include "robermix/version.hpp"

namespace robermix {

using nlohmann::json;

void SplitSpec::validate() const {
    if (!(train > 0.0 && val > 0.0 && test > 0.0))
        throw ConfigError("split fractions must be strictly positive");
    if (std::fabs(train + val + test - 1.0) > 1.0e-9)
        throw ConfigError("split fractions must sum to 1");
}

SplitResult chronological_split(const TimeSeries& series, const SplitSpec& spec) {
    spec.validate();
    const std::size_t total = series.length();
    if (total < 3) throw SplitError("series too short to split three ways");

    const auto n_train = static_cast<std::size_t>(
        std::floor(spec.train * static_cast<double>(total)));
    const auto n_val =
        static_cast<std::size_t>(std::floor(spec.val * static_cast<double>(total)));
    if (n_train == 0 || n_val == 0 || n_train + n_val >= total)
        throw SplitError("a split segment would be empty");

    SplitResult out;
    out.val_begin = n_train;
    out.test_begin = n_train + n_val;
    out.train = series.slice(0, n_train);
    out.val = series.slice(n_train, n_train + n_val);
    out.test = series.slice(n_train + n_val, total);
    return out;
}

NormalizationStats fit_normalizer(const TimeSeries& train) {
    if (train.length() == 0) throw SplitError("cannot fit a normalizer on an empty split");
    const std::size_t c = train.channels();
    const std::size_t n = train.length();
    NormalizationStats stats;
    stats.mean.resize(c);
    stats.std.resize(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
        const auto col = train.channel(ch);
        double sum = 0.0;
        for (double v : col) sum += v;
        const double mean = sum / static_cast<double>(n);
        double sq = 0.0;
        for (double v : col) sq += (v - mean) * (v - mean);
        stats.mean[ch] = mean;
        stats.std[ch] = std::max(std::sqrt(sq / static_cast<double>(n)), 1.0e-12);
    }
    return stats;
}

TimeSeries NormalizationStats::normalize(const TimeSeries& series) const {
    if (series.channels() != mean.size())
        throw ShapeError("normalizer channel count does not match series");
    TimeSeries out = series;
    const std::size_t n = out.length();
    for (std::size_t ch = 0; ch < out.channels(); ++ch)
        for (std::size_t i = 0; i < n; ++i)
            out.values[ch * n + i] = normalize_value(ch, out.values[ch * n + i]);
    return out;
}

TimeSeries NormalizationStats::denormalize(const TimeSeries& series) const {
    if (series.channels() != mean.size())
        throw ShapeError("normalizer channel count does not match series");
    TimeSeries out = series;
    const std::size_t n = out.length();
    for (std::size_t ch = 0; ch < out.channels(); ++ch)
        for (std::size_t i = 0; i < n; ++i)
            out.values[ch * n + i] = denormalize_value(ch, out.values[ch * n + i]);
    return out;
}

WindowSet make_windows(const TimeSeries& series, std::size_t context_len, std::size_t horizon,
                       std::size_t stride) {
    if (context_len == 0 || horizon == 0) throw ConfigError("window sizes must be positive");
    if (stride == 0) throw ConfigError("window stride must be >= 1");
    const std::size_t total = series.length();
    if (total < context_len + horizon)
        throw SplitError("series length " + std::to_string(total) +
                         " is shorter than context + horizon = " +
                         std::to_string(context_len + horizon));

    WindowSet set;
    set.context_len = context_len;
    set.horizon = horizon;
    set.stride = stride;
    const std::size_t count = (total - context_len - horizon) / stride + 1;
    set.windows.reserve(count);
    for (std::size_t i = 0; i < count; ++i) set.windows.push_back(WindowPair{i * stride});
    return set;
}

void copy_context(const TimeSeries& series, const WindowSet& set, std::size_t index,
                  std::vector<double>& out) {
    const std::size_t c = series.channels();
    const std::size_t n = series.length();
    const std::size_t H = set.context_len;
    const std::size_t origin = set.windows.at(index).origin;
    out.resize(c * H);
    for (std::size_t ch = 0; ch < c; ++ch)
        std::memcpy(out.data() + ch * H, series.values.data() + ch * n + origin,
                    H * sizeof(double));
}

void copy_target(const TimeSeries& series, const WindowSet& set, std::size_t index,
                 std::vector<double>& out) {
    const std::size_t c = series.channels();
    const std::size_t n = series.length();
    const std::size_t h = set.horizon;
    const std::size_t start = set.windows.at(index).origin + set.context_len;
    out.resize(c * h);
    for (std::size_t ch = 0; ch < c; ++ch)
        std::memcpy(out.data() + ch * h, series.values.data() + ch * n + start,
                    h * sizeof(double));
}

void write_meta(const DatasetMeta& meta, const std::string& path) {
    json j;
    j["rates"] = {{"k1", meta.rates.k1}, {"k2", meta.rates.k2}, {"k3", meta.rates.k3}};
    j["y0"] = meta.y0;
    j["tolerances"] = {{"rtol", meta.tol.rtol}, {"atol", meta.tol.atol}};
    j["t0"] = meta.t0;
    j["t_end"] = meta.t_end;
    j["dt"] = meta.dt;
    j["generator_version"] = meta.generator_version;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
    if (!out) throw IoError("write failed: " + path);
}

DatasetMeta read_meta(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError("bad metadata JSON in " + path + ": " + e.what());
    }
    DatasetMeta meta;
    try {
        meta.rates.k1 = j.at("rates").at("k1").get<double>();
        meta.rates.k2 = j.at("rates").at("k2").get<double>();
        meta.rates.k3 = j.at("rates").at("k3").get<double>();
        const auto y0 = j.at("y0").get<std::vector<double>>();
        if (y0.size() != 3) throw FormatError("y0 must have 3 entries in " + path);
        std::copy(y0.begin(), y0.end(), meta.y0.begin());
        meta.tol.rtol = j.at("tolerances").at("rtol").get<double>();
        meta.tol.atol = j.at("tolerances").at("atol").get<double>();
        meta.t0 = j.at("t0").get<double>();
        meta.t_end = j.at("t_end").get<double>();
        meta.dt = j.at("dt").get<double>();
        meta.generator_version = j.at("generator_version").get<std::string>();
    } catch (const json::exception& e) {
        throw FormatError("missing or invalid field in " + path + ": " + e.what());
    }
    return meta;
}

}  // namespace robermix
