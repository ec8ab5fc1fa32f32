#include <doctest.h>

#include <cmath>
#include <fstream>

#include "robermix/dataset.hpp"
#include "robermix/errors.hpp"
#include "robermix/rng.hpp"
#include "testutil.hpp"

using namespace robermix;

TEST_SUITE_BEGIN("dataset");

namespace {

TimeSeries ramp_series(std::size_t length) {
    return testutil::make_series(3, length, 1.0, [](std::size_t ch, std::size_t i) {
        return static_cast<double>(ch + 1) * 0.25 + static_cast<double>(i) * 0.001;
    });
}

}  // namespace

TEST_CASE("split lengths follow the floor rule") {
    const auto r10 = chronological_split(ramp_series(10), SplitSpec{});
    CHECK(r10.train.length() == 6);
    CHECK(r10.val.length() == 2);
    CHECK(r10.test.length() == 2);

    const auto r = chronological_split(ramp_series(100001), SplitSpec{});
    CHECK(r.train.length() == 60000);
    CHECK(r.val.length() == 20000);
    CHECK(r.test.length() == 20001);
    CHECK(r.val_begin == 60000);
    CHECK(r.test_begin == 80000);
}

TEST_CASE("concatenating the splits reproduces the series") {
    const auto s = ramp_series(101);
    const auto r = chronological_split(s, SplitSpec{});
    std::size_t idx = 0;
    for (const TimeSeries* part : {&r.train, &r.val, &r.test}) {
        for (std::size_t i = 0; i < part->length(); ++i, ++idx) {
            CHECK(part->times[i] == s.times[idx]);
            for (std::size_t ch = 0; ch < 3; ++ch)
                CHECK(part->value(ch, i) == s.value(ch, idx));
        }
    }
    CHECK(idx == s.length());
}

TEST_CASE("degenerate splits are rejected") {
    CHECK_THROWS_AS(chronological_split(ramp_series(3), SplitSpec{0.1, 0.1, 0.8}),
                    SplitError);
    CHECK_THROWS_AS((SplitSpec{0.5, 0.5, 0.5}.validate()), ConfigError);
    CHECK_THROWS_AS((SplitSpec{0.0, 0.5, 0.5}.validate()), ConfigError);
}

TEST_CASE("normalizer statistics use the population convention") {
    // channel 0 constant at 5 -> std clamps; channel 1 = (0,2) -> mean 1 std 1
    TimeSeries s;
    s.channel_names = {"a", "b"};
    s.times = {0.0, 1.0};
    s.values = {5.0, 5.0, 0.0, 2.0};
    const auto stats = fit_normalizer(s);
    CHECK(stats.mean[0] == 5.0);
    CHECK(stats.std[0] == 1.0e-12);
    CHECK(stats.mean[1] == 1.0);
    CHECK(stats.std[1] == 1.0);
}

TEST_CASE("normalize then denormalize is the identity within rounding") {
    const auto s = ramp_series(64);
    const auto stats = fit_normalizer(s);
    const auto back = stats.denormalize(stats.normalize(s));
    for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t i = 0; i < s.length(); ++i)
            CHECK(back.value(ch, i) ==
                  doctest::Approx(s.value(ch, i)).epsilon(4e-16));
}

TEST_CASE("window counts and origins") {
    const auto s612 = ramp_series(612);
    const auto w1 = make_windows(s612, 512, 100, 1);
    REQUIRE(w1.size() == 1);
    CHECK(w1.windows[0].origin == 0);

    const auto s712 = ramp_series(712);
    const auto w2 = make_windows(s712, 512, 100, 100);
    REQUIRE(w2.size() == 2);
    CHECK(w2.windows[0].origin == 0);
    CHECK(w2.windows[1].origin == 100);

    CHECK_THROWS_AS(make_windows(ramp_series(100), 512, 100, 1), SplitError);
}

TEST_CASE("window targets slice the source exactly") {
    const auto s = ramp_series(700);
    const auto set = make_windows(s, 512, 100, 37);
    std::vector<double> ctx, tgt;
    for (std::size_t w = 0; w < set.size(); ++w) {
        copy_context(s, set, w, ctx);
        copy_target(s, set, w, tgt);
        const std::size_t origin = set.windows[w].origin;
        for (std::size_t ch = 0; ch < 3; ++ch) {
            for (std::size_t i = 0; i < 512; ++i)
                CHECK(ctx[ch * 512 + i] == s.value(ch, origin + i));
            for (std::size_t i = 0; i < 100; ++i)
                CHECK(tgt[ch * 100 + i] == s.value(ch, origin + 512 + i));
        }
    }
}

TEST_CASE("windows at stride h tile the split without gaps") {
    const std::size_t H = 32, h = 8;
    const auto s = ramp_series(163);
    const auto set = make_windows(s, H, h, h);
    const std::size_t expected = (163 - H - h) / h + 1;
    REQUIRE(set.size() == expected);
    // consecutive targets are adjacent: [H + i*h, H + (i+1)*h)
    for (std::size_t w = 0; w < set.size(); ++w)
        CHECK(set.windows[w].origin + H == H + w * h);
}

TEST_CASE("CSV round-trips bit-exactly") {
    testutil::TempDir dir("csv_roundtrip");
    Rng rng(23);
    auto s = testutil::make_series(3, 2, 1.0, [](std::size_t, std::size_t) { return 0.0; });
    for (auto& v : s.values) v = rng.uniform(-1.0, 1.0) * std::pow(10.0, rng.uniform(-8, 3));
    write_csv(s, dir.file("x.csv"));
    const auto back = read_csv(dir.file("x.csv"));
    CHECK(back.channel_names == s.channel_names);
    CHECK(back.times == s.times);
    CHECK(back.values == s.values);

    // header contract for ROBER output
    std::ifstream in(dir.file("x.csv"));
    std::string header;
    std::getline(in, header);
    CHECK(header == "t,y1,y2,y3");
}

TEST_CASE("CSV round-trip over random long series") {
    testutil::TempDir dir("csv_roundtrip2");
    Rng rng(29);
    auto s = testutil::make_series(2, 500, 0.25, [](std::size_t, std::size_t) { return 0.0; });
    for (auto& v : s.values) v = rng.uniform(-1e-5, 1e-5);
    write_csv(s, dir.file("y.csv"));
    const auto back = read_csv(dir.file("y.csv"));
    CHECK(back.values == s.values);
    CHECK(back.times == s.times);
}

TEST_CASE("malformed CSVs are rejected") {
    testutil::TempDir dir("csv_bad");
    auto write_text = [&](const std::string& name, const std::string& text) {
        std::ofstream out(dir.file(name), std::ios::binary);
        out << text;
        return dir.file(name);
    };

    CHECK_THROWS_AS(read_csv(write_text("h.csv", "x,y1\n0,1\n")), FormatError);
    CHECK_THROWS_AS(read_csv(write_text("r.csv", "t,y1\n0,1\n1\n")), FormatError);
    CHECK_THROWS_AS(read_csv(write_text("n.csv", "t,y1\n0,abc\n")), FormatError);
    CHECK_THROWS_AS(read_csv(write_text("d.csv", "t,y1\n1,1\n0,2\n")), FormatError);
    CHECK_THROWS_AS(read_csv(write_text("u.csv", "t,y1\n0,1\n1,2\n3.5,3\n")), FormatError);
    CHECK_THROWS_AS(read_csv(dir.file("missing.csv")), IoError);
}

TEST_CASE("dataset metadata sidecar round-trips") {
    testutil::TempDir dir("meta");
    DatasetMeta meta;
    meta.rates = RateConstants{0.04, 3e7, 1e4};
    meta.y0 = {0.776, 6.913e-5, 0.081};
    meta.tol = ToleranceSpec{1e-8, 1e-10};
    meta.t0 = 0.0;
    meta.t_end = 1e5;
    meta.dt = 1.0;
    meta.generator_version = "0.1.0";
    write_meta(meta, dir.file("data.meta.json"));
    const auto back = read_meta(dir.file("data.meta.json"));
    CHECK(back.rates.k2 == meta.rates.k2);
    CHECK(back.y0 == meta.y0);
    CHECK(back.tol.atol == meta.tol.atol);
    CHECK(back.t_end == meta.t_end);
    CHECK(back.generator_version == meta.generator_version);
}

TEST_SUITE_END();
