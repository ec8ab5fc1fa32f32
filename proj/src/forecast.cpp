#include "robermix/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "robermix/errors.hpp"
#include "robermix/mixer.hpp"

namespace robermix {

using nlohmann::json;

namespace {

constexpr const char* kErrorFormula = "range_normalized_mean_abs_error_pct";

// Produces one horizon block of PHYSICAL-scale predictions from a PHYSICAL
// context copied into `context`. The mixer path normalizes, runs the net and
// de-normalizes; the oracle path copies ground truth (test fixture).
class Predictor {
  public:
    Predictor(const Checkpoint& ckpt, const TimeSeries& series)
        : ckpt_(ckpt), series_(series) {
        if (ckpt.kind == "patch_mixer") {
            params_.config = ckpt.model;
            params_.layout = ParamLayout::for_config(ckpt.model);
            params_.values = ckpt.param_values;
            params_.grads.assign(params_.layout.total, 0.0);
        }
    }

    // context: channels x H physical values; out: channels x h physical.
    void predict(std::span<const double> context, std::size_t origin,
                 std::vector<double>& out) {
        const std::size_t c = ckpt_.model.channels;
        const std::size_t H = ckpt_.model.context_length;
        const std::size_t h = ckpt_.model.horizon;
        out.resize(c * h);
        if (ckpt_.kind == "ground_truth_oracle") {
            const std::size_t n = series_.length();
            for (std::size_t ch = 0; ch < c; ++ch)
                std::memcpy(out.data() + ch * h, series_.values.data() + ch * n + origin,
                            h * sizeof(double));
            return;
        }
        normalized_.resize(c * H);
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < H; ++i)
                normalized_[ch * H + i] = ckpt_.norm.normalize_value(ch, context[ch * H + i]);
        forward(params_, normalized_, trace_, nullptr);
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < h; ++i)
                out[ch * h + i] =
                    ckpt_.norm.denormalize_value(ch, trace_.prediction[ch * h + i]);
    }

  private:
    const Checkpoint& ckpt_;
    const TimeSeries& series_;
    Parameters params_;
    ForwardTrace trace_;
    std::vector<double> normalized_;
};

ForecastReport run_forecast(const Checkpoint& ckpt, const TimeSeries& series, EvalRange range,
                            bool dynamic) {
    ckpt.model.validate();
    const std::size_t c = ckpt.model.channels;
    const std::size_t H = ckpt.model.context_length;
    const std::size_t h = ckpt.model.horizon;
    const std::size_t n = series.length();

    if (series.channels() != c)
        throw ShapeError("series channel count does not match the checkpoint");
    if (range.end > n || range.begin >= range.end)
        throw RangeError("evaluation range outside the series");
    if (range.begin < H)
        throw RangeError("evaluation range must be preceded by at least context_length samples");
    const std::size_t n_batches = (range.end - range.begin) / h;
    if (n_batches == 0) throw RangeError("evaluation range shorter than one horizon");

    const auto ranges = channel_ranges(series);
    Predictor predictor(ckpt, series);

    ForecastReport report;
    report.mode = dynamic ? "dynamic" : "batchwise";
    report.formula = kErrorFormula;
    report.scale = "physical";
    report.batches.reserve(n_batches);

    // rolling physical-scale context; in dynamic mode predictions displace
    // the oldest entries after each block
    std::vector<double> context(c * H);
    for (std::size_t ch = 0; ch < c; ++ch)
        std::memcpy(context.data() + ch * H, series.values.data() + ch * n + range.begin - H,
                    H * sizeof(double));

    std::vector<double> pred, truth(c * h);
    std::vector<double> forecast_values(c * n_batches * h);

    for (std::size_t b = 0; b < n_batches; ++b) {
        const std::size_t origin = range.begin + b * h;
        if (!dynamic) {
            for (std::size_t ch = 0; ch < c; ++ch)
                std::memcpy(context.data() + ch * H, series.values.data() + ch * n + origin - H,
                            H * sizeof(double));
        }
        predictor.predict(context, origin, pred);
        for (std::size_t ch = 0; ch < c; ++ch)
            std::memcpy(truth.data() + ch * h, series.values.data() + ch * n + origin,
                        h * sizeof(double));

        const double err = relative_error(pred, truth, ranges, h);
        report.batches.push_back(ForecastBatch{origin, err});
        for (std::size_t ch = 0; ch < c; ++ch)
            std::memcpy(forecast_values.data() + ch * n_batches * h + b * h,
                        pred.data() + ch * h, h * sizeof(double));

        if (dynamic) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                double* row = context.data() + ch * H;
                std::memmove(row, row + h, (H - h) * sizeof(double));
                std::memcpy(row + H - h, pred.data() + ch * h, h * sizeof(double));
            }
        }
    }

    double mean = 0.0;
    for (const auto& b : report.batches) mean += b.relative_error;
    mean /= static_cast<double>(n_batches);
    double var = 0.0;
    for (const auto& b : report.batches) {
        const double d = b.relative_error - mean;
        var += d * d;
    }
    report.mean_error = mean;
    report.std_error = std::sqrt(var / static_cast<double>(n_batches));

    report.forecast.channel_names = series.channel_names;
    report.forecast.times.assign(series.times.begin() + static_cast<std::ptrdiff_t>(range.begin),
                                 series.times.begin() +
                                     static_cast<std::ptrdiff_t>(range.begin + n_batches * h));
    report.forecast.values = std::move(forecast_values);
    return report;
}

}  // namespace

std::vector<double> channel_ranges(const TimeSeries& series) {
    std::vector<double> out(series.channels());
    for (std::size_t ch = 0; ch < series.channels(); ++ch) {
        const auto col = series.channel(ch);
        const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
        out[ch] = *hi - *lo;
        if (!(out[ch] > 0.0))
            throw DegenerateRange("channel " + series.channel_names[ch] +
                                  " is constant over the series");
    }
    return out;
}

double relative_error(std::span<const double> pred, std::span<const double> truth,
                      std::span<const double> ranges, std::size_t horizon) {
    if (pred.size() != truth.size() || pred.size() != ranges.size() * horizon)
        throw ShapeError("relative_error operands disagree in shape");
    for (double r : ranges)
        if (!(r > 0.0)) throw DegenerateRange("channel range must be strictly positive");
    double acc = 0.0;
    for (std::size_t ch = 0; ch < ranges.size(); ++ch) {
        const double inv_range = 1.0 / ranges[ch];
        for (std::size_t i = 0; i < horizon; ++i)
            acc += std::fabs(pred[ch * horizon + i] - truth[ch * horizon + i]) * inv_range;
    }
    return 100.0 * acc / static_cast<double>(pred.size());
}

ForecastReport batchwise_forecast(const Checkpoint& ckpt, const TimeSeries& series,
                                  EvalRange range) {
    return run_forecast(ckpt, series, range, false);
}

ForecastReport dynamic_forecast(const Checkpoint& ckpt, const TimeSeries& series,
                                EvalRange range) {
    return run_forecast(ckpt, series, range, true);
}

void export_report(const ForecastReport& report, const std::string& json_path,
                   const std::string& csv_path) {
    json j;
    j["mode"] = report.mode;
    j["formula"] = report.formula;
    j["scale"] = report.scale;
    j["checkpoint"] = report.checkpoint_hash;
    j["mean_error_pct"] = report.mean_error;
    j["std_error_pct"] = report.std_error;
    json batches = json::array();
    for (const auto& b : report.batches)
        batches.push_back({{"origin", b.origin}, {"relative_error_pct", b.relative_error}});
    j["batches"] = batches;

    std::ofstream out(json_path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + json_path);
    out << j.dump(2) << "\n";
    if (!out) throw IoError("write failed: " + json_path);

    std::FILE* f = std::fopen(csv_path.c_str(), "wb");
    if (!f) throw IoError("cannot open for writing: " + csv_path);
    std::fputs("origin,relative_error_pct\n", f);
    for (const auto& b : report.batches)
        std::fprintf(f, "%zu,%.17g\n", b.origin, b.relative_error);
    if (std::fclose(f) != 0) throw IoError("close failed: " + csv_path);
}

ForecastReport load_report(const std::string& json_path) {
    std::ifstream in(json_path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + json_path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError("bad report JSON in " + json_path + ": " + e.what());
    }
    ForecastReport report;
    try {
        report.mode = j.at("mode").get<std::string>();
        report.formula = j.at("formula").get<std::string>();
        report.scale = j.at("scale").get<std::string>();
        report.checkpoint_hash = j.at("checkpoint").get<std::string>();
        report.mean_error = j.at("mean_error_pct").get<double>();
        report.std_error = j.at("std_error_pct").get<double>();
        for (const auto& b : j.at("batches"))
            report.batches.push_back(ForecastBatch{b.at("origin").get<std::size_t>(),
                                                   b.at("relative_error_pct").get<double>()});
    } catch (const json::exception& e) {
        throw FormatError("missing field in " + json_path + ": " + e.what());
    }
    return report;
}

void plot_series(const std::vector<NamedSeries>& list, const std::string& path) {
    if (list.empty() || list[0].series == nullptr) throw IoError("nothing to plot");
    const std::size_t c = list[0].series->channels();
    for (const auto& entry : list) {
        if (entry.series == nullptr || entry.series->channels() != c)
            throw FormatError("all plotted series must share the channel layout");
        if (std::fabs(entry.series->dt() - list[0].series->dt()) >
            1.0e-9 * std::fabs(list[0].series->dt()))
            throw FormatError("plotted series disagree in sampling interval");
    }

    const double pane_w = 840.0, pane_h = 160.0, margin = 40.0, gap = 24.0;
    const double width = pane_w + 2 * margin;
    const double height = margin + c * (pane_h + gap) + margin;

    double t_min = list[0].series->times.front(), t_max = list[0].series->times.back();
    for (const auto& entry : list) {
        t_min = std::min(t_min, entry.series->times.front());
        t_max = std::max(t_max, entry.series->times.back());
    }
    if (!(t_max > t_min)) t_max = t_min + 1.0;

    // per-channel value range over all series, for the normalized axes
    std::vector<double> lo(c, std::numeric_limits<double>::infinity());
    std::vector<double> hi(c, -std::numeric_limits<double>::infinity());
    for (const auto& entry : list) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (double v : entry.series->channel(ch)) {
                lo[ch] = std::min(lo[ch], v);
                hi[ch] = std::max(hi[ch], v);
            }
        }
    }

    static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"};

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    for (std::size_t ch = 0; ch < c; ++ch) {
        const double top = margin + ch * (pane_h + gap);
        out << "<rect x=\"" << margin << "\" y=\"" << top << "\" width=\"" << pane_w
            << "\" height=\"" << pane_h
            << "\" fill=\"none\" stroke=\"#cccccc\" stroke-width=\"1\"/>\n";
        out << "<text x=\"" << margin + 6 << "\" y=\"" << top + 16
            << "\" font-family=\"sans-serif\" font-size=\"13\">"
            << list[0].series->channel_names[ch] << " (normalized)</text>\n";

        const double span_v = hi[ch] > lo[ch] ? hi[ch] - lo[ch] : 1.0;
        for (std::size_t si = 0; si < list.size(); ++si) {
            const TimeSeries& s = *list[si].series;
            const std::size_t n = s.length();
            const std::size_t max_points = 2000;  // keep files small
            const std::size_t step = n > max_points ? n / max_points : 1;
            out << "<polyline fill=\"none\" stroke=\"" << kColors[si % 5]
                << "\" stroke-width=\"1.2\" points=\"";
            char buf[64];
            for (std::size_t i = 0; i < n; i += step) {
                const double px =
                    margin + (s.times[i] - t_min) / (t_max - t_min) * pane_w;
                const double norm = (s.value(ch, i) - lo[ch]) / span_v;
                const double py = top + pane_h - norm * (pane_h - 24.0) - 12.0;
                std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px, py);
                out << buf;
            }
            out << "\"/>\n";
        }
    }

    // legend
    for (std::size_t si = 0; si < list.size(); ++si) {
        const double y = height - margin + 14.0;
        const double x = margin + static_cast<double>(si) * 180.0;
        out << "<line x1=\"" << x << "\" y1=\"" << y - 4 << "\" x2=\"" << x + 24 << "\" y2=\""
            << y - 4 << "\" stroke=\"" << kColors[si % 5] << "\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << x + 30 << "\" y=\"" << y
            << "\" font-family=\"sans-serif\" font-size=\"12\">" << list[si].label
            << "</text>\n";
    }

    out << "</svg>\n";
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace robermix
