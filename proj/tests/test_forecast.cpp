#include <doctest.h>

#include <cmath>
#include <fstream>

#include "robermix/errors.hpp"
#include "robermix/forecast.hpp"
#include "robermix/rng.hpp"
#include "testutil.hpp"

using namespace robermix;

TEST_SUITE_BEGIN("forecast");

namespace {

TimeSeries wavy_series(std::size_t length, std::size_t channels = 2) {
    auto s = testutil::make_series(channels, length, 1.0,
                                   [](std::size_t, std::size_t) { return 0.0; });
    for (std::size_t ch = 0; ch < channels; ++ch)
        for (std::size_t i = 0; i < length; ++i)
            s.values[ch * length + i] =
                std::sin(0.05 * static_cast<double>(i) + static_cast<double>(ch)) +
                0.002 * static_cast<double>(i);
    return s;
}

Checkpoint oracle_checkpoint(const ModelConfig& cfg, const TimeSeries& series) {
    Checkpoint ckpt;
    ckpt.kind = "ground_truth_oracle";
    ckpt.model = cfg;
    ckpt.norm.mean.assign(cfg.channels, 0.0);
    ckpt.norm.std.assign(cfg.channels, 1.0);
    ckpt.data_dt = series.dt();
    ckpt.channel_names = series.channel_names;
    return ckpt;
}

Checkpoint mixer_checkpoint(const ModelConfig& cfg, const TimeSeries& series,
                            std::uint64_t seed) {
    Checkpoint ckpt;
    ckpt.kind = "patch_mixer";
    ckpt.model = cfg;
    ckpt.param_values = init_params(cfg, seed).values;
    ckpt.norm.mean.assign(cfg.channels, 0.0);
    ckpt.norm.std.assign(cfg.channels, 1.0);
    ckpt.data_dt = series.dt();
    ckpt.channel_names = series.channel_names;
    return ckpt;
}

}  // namespace

TEST_CASE("relative_error examples") {
    const std::vector<double> truth{1.0, 2.0, 3.0, 4.0};
    CHECK(relative_error(truth, truth, std::vector<double>{2.0}, 4) == 0.0);

    // constant absolute error 0.01 against range 2 -> 0.5%
    std::vector<double> pred = truth;
    for (auto& v : pred) v += 0.01;
    CHECK(relative_error(pred, truth, std::vector<double>{2.0}, 4) ==
          doctest::Approx(0.5).epsilon(1e-12));

    CHECK_THROWS_AS(relative_error(pred, truth, std::vector<double>{0.0}, 4),
                    DegenerateRange);
    CHECK_THROWS_AS(relative_error(pred, truth, std::vector<double>{2.0}, 3), ShapeError);
}

TEST_CASE("relative_error is invariant under a common affine rescaling") {
    Rng rng(41);
    std::vector<double> pred(12), truth(12);
    for (auto& v : pred) v = rng.uniform(-1, 1);
    for (auto& v : truth) v = rng.uniform(-1, 1);
    const std::vector<double> ranges{1.7, 0.3};

    const double base = relative_error(pred, truth, ranges, 6);
    const double a = 3.25, b = -11.0;
    std::vector<double> pred2 = pred, truth2 = truth;
    for (auto& v : pred2) v = a * v + b;
    for (auto& v : truth2) v = a * v + b;
    const std::vector<double> ranges2{a * 1.7, a * 0.3};
    const double scaled = relative_error(pred2, truth2, ranges2, 6);
    CHECK(scaled == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("channel_ranges rejects constant channels") {
    auto s = wavy_series(50);
    const auto r = channel_ranges(s);
    CHECK(r.size() == 2);
    CHECK(r[0] > 0.0);
    for (std::size_t i = 0; i < 50; ++i) s.value(1, i) = 3.0;
    CHECK_THROWS_AS(channel_ranges(s), DegenerateRange);
}

TEST_CASE("a perfect oracle gives exactly zero error in both modes") {
    const auto series = wavy_series(200);
    auto cfg = testutil::tiny_config();  // H=8, h=2, c=2
    const auto ckpt = oracle_checkpoint(cfg, series);

    for (bool dynamic : {false, true}) {
        const EvalRange range{100, 160};
        const auto report = dynamic ? dynamic_forecast(ckpt, series, range)
                                    : batchwise_forecast(ckpt, series, range);
        CHECK(report.batches.size() == 30);
        CHECK(report.mean_error == 0.0);
        CHECK(report.std_error == 0.0);
        for (const auto& b : report.batches) CHECK(b.relative_error == 0.0);
    }
}

TEST_CASE("batches tile the evaluation range with stride h") {
    const auto series = wavy_series(1000);
    auto cfg = testutil::tiny_config();
    cfg.horizon = 20;
    cfg.context_length = 40;
    cfg.patch_length = 8;
    cfg.patch_stride = 8;
    const auto ckpt = oracle_checkpoint(cfg, series);

    const auto report = batchwise_forecast(ckpt, series, EvalRange{500, 700});
    REQUIRE(report.batches.size() == 10);  // floor(200 / 20)
    for (std::size_t b = 0; b < report.batches.size(); ++b)
        CHECK(report.batches[b].origin == 500 + b * 20);

    // a trailing partial block is dropped
    const auto partial = batchwise_forecast(ckpt, series, EvalRange{500, 711});
    CHECK(partial.batches.size() == 10);
}

TEST_CASE("the first dynamic batch coincides with the first batchwise batch") {
    const auto series = wavy_series(300);
    const auto cfg = testutil::tiny_config();
    const auto ckpt = mixer_checkpoint(cfg, series, 77);

    const EvalRange range{150, 250};
    const auto bw = batchwise_forecast(ckpt, series, range);
    const auto dy = dynamic_forecast(ckpt, series, range);
    REQUIRE(!bw.batches.empty());
    CHECK(bw.batches[0].relative_error == dy.batches[0].relative_error);
    const std::size_t h = cfg.horizon;
    for (std::size_t ch = 0; ch < cfg.channels; ++ch)
        for (std::size_t i = 0; i < h; ++i)
            CHECK(bw.forecast.value(ch, i) == dy.forecast.value(ch, i));
}

TEST_CASE("report mean/std are recomputable from the batch list") {
    const auto series = wavy_series(400);
    const auto cfg = testutil::tiny_config();
    const auto ckpt = mixer_checkpoint(cfg, series, 31);
    const auto report = batchwise_forecast(ckpt, series, EvalRange{200, 360});

    double mean = 0.0;
    for (const auto& b : report.batches) mean += b.relative_error;
    mean /= static_cast<double>(report.batches.size());
    double var = 0.0;
    for (const auto& b : report.batches) var += std::pow(b.relative_error - mean, 2);
    const double stddev = std::sqrt(var / static_cast<double>(report.batches.size()));

    CHECK(report.mean_error == doctest::Approx(mean).epsilon(1e-12));
    CHECK(report.std_error == doctest::Approx(stddev).epsilon(1e-12));
    CHECK(report.mean_error > 0.0);  // an untrained net is not an oracle
}

TEST_CASE("evaluation range preconditions") {
    const auto series = wavy_series(100);
    const auto cfg = testutil::tiny_config();
    const auto ckpt = oracle_checkpoint(cfg, series);
    CHECK_THROWS_AS(batchwise_forecast(ckpt, series, EvalRange{99, 100}), RangeError);
    CHECK_THROWS_AS(batchwise_forecast(ckpt, series, EvalRange{4, 50}), RangeError);
    CHECK_THROWS_AS(batchwise_forecast(ckpt, series, EvalRange{50, 101}), RangeError);
}

TEST_CASE("report export and reload") {
    testutil::TempDir dir("report");
    const auto series = wavy_series(300);
    const auto cfg = testutil::tiny_config();
    const auto ckpt = mixer_checkpoint(cfg, series, 13);
    auto report = batchwise_forecast(ckpt, series, EvalRange{150, 250});
    report.checkpoint_hash = "fnv1a64:0123456789abcdef";

    export_report(report, dir.file("report.json"), dir.file("report.csv"));
    const auto back = load_report(dir.file("report.json"));
    CHECK(back.mean_error == report.mean_error);
    CHECK(back.std_error == report.std_error);
    CHECK(back.mode == "batchwise");
    CHECK(back.formula == report.formula);
    CHECK(back.checkpoint_hash == report.checkpoint_hash);
    REQUIRE(back.batches.size() == report.batches.size());
    for (std::size_t i = 0; i < back.batches.size(); ++i) {
        CHECK(back.batches[i].origin == report.batches[i].origin);
        CHECK(back.batches[i].relative_error == report.batches[i].relative_error);
    }

    std::ifstream csv(dir.file("report.csv"));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "origin,relative_error_pct");
}

TEST_CASE("SVG plots carry one polyline per channel per series") {
    testutil::TempDir dir("svg");
    const auto truth = wavy_series(120, 3);
    auto forecast = truth;
    for (auto& v : forecast.values) v += 0.01;

    plot_series({{"truth", &truth}, {"forecast", &forecast}}, dir.file("plot.svg"));

    std::ifstream in(dir.file("plot.svg"));
    const std::string text((std::istreambuf_iterator<char>(in)), {});
    std::size_t count = 0;
    for (std::size_t pos = text.find("<polyline"); pos != std::string::npos;
         pos = text.find("<polyline", pos + 1))
        ++count;
    CHECK(count == 6);  // 3 channels x 2 series

    auto coarser = testutil::make_series(3, 60, 2.0, [](std::size_t, std::size_t) { return 1.0; });
    CHECK_THROWS_AS(plot_series({{"a", &truth}, {"b", &coarser}}, dir.file("bad.svg")),
                    FormatError);
}

TEST_SUITE_END();
