#include <doctest.h>

#include <cmath>
#include <fstream>

#include "robermix/errors.hpp"
#include "robermix/trainer.hpp"
#include "testutil.hpp"

using namespace robermix;

TEST_SUITE_BEGIN("trainer");

namespace {

// one-scalar parameter set, enough for optimizer unit tests
Parameters scalar_params(double theta, bool decay) {
    Parameters p;
    p.layout.arrays.push_back(ArraySpec{"theta", {1}, 0, 1, decay});
    p.layout.total = 1;
    p.values = {theta};
    p.grads = {0.0};
    return p;
}

TrainConfig adamw_defaults() {
    TrainConfig cfg;
    cfg.learning_rate = 1.0e-3;
    cfg.beta1 = 0.9;
    cfg.beta2 = 0.999;
    cfg.epsilon = 1.0e-8;
    cfg.weight_decay = 0.01;
    return cfg;
}

struct TrainingFixture {
    TimeSeries train_series, val_series;
    WindowSet train_windows, val_windows;
    CheckpointContext ctx;

    TrainingFixture(double level, std::size_t length, const ModelConfig& cfg) {
        auto series =
            testutil::make_series(cfg.channels, length, 1.0,
                                  [](std::size_t, std::size_t) { return 0.0; });
        for (auto& v : series.values) v = level;
        train_series = series;
        val_series = series;
        train_windows = make_windows(train_series, cfg.context_length, cfg.horizon, 1);
        val_windows = make_windows(val_series, cfg.context_length, cfg.horizon, 1);
        ctx.norm.mean.assign(cfg.channels, 0.0);
        ctx.norm.std.assign(cfg.channels, 1.0);
        ctx.data_dt = 1.0;
        for (std::size_t c = 0; c < cfg.channels; ++c)
            ctx.channel_names.push_back("y" + std::to_string(c + 1));
    }

    WindowedData train() const { return {&train_series, &train_windows}; }
    WindowedData val() const { return {&val_series, &val_windows}; }
};

}  // namespace

TEST_CASE("adamw hand-computed first step") {
    auto p = scalar_params(1.0, true);
    auto state = OptimizerState::for_params(p);
    const std::vector<double> g{0.5};
    adamw_step(p, g, state, adamw_defaults(), 1.0e-3);

    CHECK(state.m[0] == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(state.v[0] == doctest::Approx(2.5e-4).epsilon(1e-15));
    // mhat = 0.5, vhat = 0.25 -> theta' ~ 1 - 1e-3*(0.5/0.5) - 1e-3*0.01*1
    CHECK(p.values[0] == doctest::Approx(0.99899).epsilon(1e-7));
}

TEST_CASE("zero gradient at step 1 with wd=0 leaves parameters unchanged") {
    auto p = scalar_params(0.75, true);
    auto state = OptimizerState::for_params(p);
    auto cfg = adamw_defaults();
    cfg.weight_decay = 0.0;
    adamw_step(p, std::vector<double>{0.0}, state, cfg, 1.0e-3);
    CHECK(p.values[0] == 0.75);
}

TEST_CASE("decoupled decay shrinks weights but never biases") {
    auto weight = scalar_params(2.0, true);
    auto bias = scalar_params(2.0, false);
    auto sw = OptimizerState::for_params(weight);
    auto sb = OptimizerState::for_params(bias);
    auto cfg = adamw_defaults();
    cfg.weight_decay = 0.1;
    const std::vector<double> g{0.0};
    const double lr = 1.0e-2;

    double expect = 2.0;
    for (int step = 0; step < 5; ++step) {
        adamw_step(weight, g, sw, cfg, lr);
        adamw_step(bias, g, sb, cfg, lr);
        expect *= 1.0 - lr * cfg.weight_decay;
        CHECK(weight.values[0] == doctest::Approx(expect).epsilon(1e-14));
        CHECK(bias.values[0] == 2.0);
    }
}

TEST_CASE("weight-decay choice does not touch excluded parameters") {
    // zero gradients: wd=0 vs wd=0.1 runs must agree bitwise on excluded slots
    auto a = scalar_params(1.5, false);
    auto b = scalar_params(1.5, false);
    auto sa = OptimizerState::for_params(a);
    auto sb = OptimizerState::for_params(b);
    auto cfg0 = adamw_defaults();
    cfg0.weight_decay = 0.0;
    auto cfg1 = adamw_defaults();
    cfg1.weight_decay = 0.1;
    for (int i = 0; i < 10; ++i) {
        adamw_step(a, std::vector<double>{0.0}, sa, cfg0, 1e-3);
        adamw_step(b, std::vector<double>{0.0}, sb, cfg1, 1e-3);
    }
    CHECK(a.values[0] == b.values[0]);
}

TEST_CASE("adamw drives a 1-d quadratic to its minimum") {
    // loss (theta-3)^2, gradient 2(theta-3)
    auto p = scalar_params(0.0, true);
    auto state = OptimizerState::for_params(p);
    auto cfg = adamw_defaults();
    cfg.weight_decay = 0.0;
    for (int step = 0; step < 500; ++step) {
        const double g = 2.0 * (p.values[0] - 3.0);
        adamw_step(p, std::vector<double>{g}, state, cfg, 0.1);
        if (std::fabs(p.values[0] - 3.0) < 1.0e-3) break;
    }
    CHECK(std::fabs(p.values[0] - 3.0) < 1.0e-3);
}

TEST_CASE("lr=0 for one epoch keeps the seeded initialization") {
    const auto cfg = testutil::tiny_config();
    TrainingFixture fx(1.0, cfg.context_length + cfg.horizon, cfg);  // 1 window

    auto params = init_params(cfg, 42);
    const auto initial = params.values;

    TrainConfig tc;
    tc.epochs = 1;
    tc.learning_rate = 0.0;
    tc.lr_min = 0.0;
    const auto result = fit(params, fx.train(), fx.val(), tc, fx.ctx);
    CHECK(result.history.size() == 1);
    CHECK(params.values == initial);
    CHECK(result.best.param_values == initial);
}

TEST_CASE("a constant series is learned to below 1e-6") {
    const auto cfg = testutil::tiny_config();
    TrainingFixture fx(5.0, cfg.context_length + cfg.horizon + 12, cfg);

    // representability oracle: zero weights + matched head bias solve it
    {
        Parameters exact;
        exact.config = cfg;
        exact.layout = ParamLayout::for_config(cfg);
        exact.values.assign(exact.layout.total, 0.0);
        exact.grads.assign(exact.layout.total, 0.0);
        for (double& v : exact.array("head.bias")) v = 5.0;
        std::vector<double> ctx_buf, tgt_buf;
        copy_context(fx.train_series, fx.train_windows, 0, ctx_buf);
        copy_target(fx.train_series, fx.train_windows, 0, tgt_buf);
        ForwardTrace trace;
        forward(exact, ctx_buf, trace, nullptr);
        CHECK(mse_loss(trace.prediction, tgt_buf) == 0.0);
    }

    auto params = init_params(cfg, 7);
    TrainConfig tc;
    tc.epochs = 200;
    tc.batch_size = 8;
    tc.learning_rate = 5.0e-2;
    tc.lr_min = 1.0e-3;
    tc.weight_decay = 0.0;
    tc.seed = 7;
    const auto result = fit(params, fx.train(), fx.val(), tc, fx.ctx);
    CHECK(result.history.back().train_loss < 1.0e-6);
}

TEST_CASE("training runs are bitwise reproducible per seed and thread count") {
    auto cfg = testutil::tiny_config();
    cfg.dropout = 0.1;  // exercise the dropout stream as well
    TrainingFixture fx(2.0, cfg.context_length + cfg.horizon + 9, cfg);
    for (std::size_t i = 0; i < fx.train_series.values.size(); ++i)
        fx.train_series.values[i] += 0.01 * static_cast<double>(i % 17);

    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 4;
    tc.seed = 99;

    auto run = [&](std::size_t threads) {
        auto params = init_params(cfg, tc.seed);
        TrainConfig local = tc;
        local.threads = threads;
        return fit(params, fx.train(), fx.val(), local, fx.ctx);
    };

    const auto r1 = run(1);
    const auto r2 = run(1);
    CHECK(r1.last.param_values == r2.last.param_values);
    for (std::size_t e = 0; e < r1.history.size(); ++e) {
        CHECK(r1.history[e].train_loss == r2.history[e].train_loss);
        CHECK(r1.history[e].val_loss == r2.history[e].val_loss);
    }

    // window-ordered gradient accumulation: thread count cannot matter
    const auto r4 = run(4);
    CHECK(r1.last.param_values == r4.last.param_values);
    for (std::size_t e = 0; e < r1.history.size(); ++e)
        CHECK(r1.history[e].train_loss == r4.history[e].train_loss);
}

TEST_CASE("the best checkpoint matches the minimum of the validation column") {
    const auto cfg = testutil::tiny_config();
    TrainingFixture fx(1.0, cfg.context_length + cfg.horizon + 20, cfg);
    for (std::size_t i = 0; i < fx.train_series.values.size(); ++i)
        fx.train_series.values[i] = std::sin(0.3 * static_cast<double>(i));

    auto params = init_params(cfg, 11);
    TrainConfig tc;
    tc.epochs = 12;
    tc.batch_size = 4;
    tc.learning_rate = 2e-2;
    const auto result = fit(params, fx.train(), fx.val(), tc, fx.ctx);

    double min_val = result.history[0].val_loss;
    for (const auto& e : result.history) min_val = std::min(min_val, e.val_loss);
    CHECK(result.history[result.best.selected_epoch].val_loss == min_val);
}

TEST_CASE("diverging training aborts with the epoch in the message") {
    const auto cfg = testutil::tiny_config();
    TrainingFixture fx(3.0, cfg.context_length + cfg.horizon + 6, cfg);
    auto params = init_params(cfg, 5);
    TrainConfig tc;
    tc.epochs = 50;
    tc.learning_rate = 1.0e150;  // guaranteed blow-up
    tc.lr_min = 1.0e150;
    try {
        fit(params, fx.train(), fx.val(), tc, fx.ctx);
        FAIL("expected NonFiniteError");
    } catch (const NonFiniteError& e) {
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
}

TEST_CASE("checkpoints round-trip bitwise and re-save byte-stably") {
    testutil::TempDir dir("ckpt");
    const auto cfg = testutil::tiny_config();
    const auto params = init_params(cfg, 123);

    Checkpoint ckpt;
    ckpt.model = cfg;
    ckpt.param_values = params.values;
    ckpt.norm.mean = {0.5, -0.25};
    ckpt.norm.std = {2.0, 1.0e-12};
    ckpt.train.seed = 123;
    ckpt.history = {{0.5, 0.6}, {0.25, 0.3}};
    ckpt.selected_epoch = 1;
    ckpt.data_dt = 1.0;
    ckpt.channel_names = {"y1", "y2"};

    save_checkpoint(ckpt, dir.file("a.ckpt"));
    const auto loaded = load_checkpoint(dir.file("a.ckpt"));
    CHECK(loaded.param_values == ckpt.param_values);
    CHECK(loaded.norm.mean == ckpt.norm.mean);
    CHECK(loaded.norm.std == ckpt.norm.std);
    CHECK(loaded.history.size() == 2);
    CHECK(loaded.history[1].train_loss == 0.25);
    CHECK(loaded.selected_epoch == 1);
    CHECK(loaded.channel_names == ckpt.channel_names);

    save_checkpoint(loaded, dir.file("b.ckpt"));
    std::ifstream fa(dir.file("a.ckpt"), std::ios::binary);
    std::ifstream fb(dir.file("b.ckpt"), std::ios::binary);
    const std::string ta((std::istreambuf_iterator<char>(fa)), {});
    const std::string tb((std::istreambuf_iterator<char>(fb)), {});
    CHECK(ta == tb);
}

TEST_CASE("checkpoint version and shape validation") {
    testutil::TempDir dir("ckpt_bad");
    const auto cfg = testutil::tiny_config();
    Checkpoint ckpt;
    ckpt.model = cfg;
    ckpt.param_values = init_params(cfg, 1).values;
    ckpt.norm.mean = {0.0, 0.0};
    ckpt.norm.std = {1.0, 1.0};
    ckpt.channel_names = {"y1", "y2"};
    save_checkpoint(ckpt, dir.file("good.ckpt"));

    // mutate the version field
    {
        std::ifstream in(dir.file("good.ckpt"));
        std::string text((std::istreambuf_iterator<char>(in)), {});
        const auto pos = text.find("\"format_version\": 1");
        REQUIRE(pos != std::string::npos);
        text.replace(pos, 19, "\"format_version\": 9");
        std::ofstream out(dir.file("version.ckpt"), std::ios::binary);
        out << text;
    }
    CHECK_THROWS_AS(load_checkpoint(dir.file("version.ckpt")), FormatError);

    // truncate one parameter array: the error must name it
    {
        std::ifstream in(dir.file("good.ckpt"));
        std::string text((std::istreambuf_iterator<char>(in)), {});
        const auto key = text.find("\"head.bias\"");
        REQUIRE(key != std::string::npos);
        const auto data_pos = text.find("\"data\": \"", key);
        REQUIRE(data_pos != std::string::npos);
        // drop 8 base64 chars = 6 bytes, keeping the payload decodable
        text.erase(data_pos + 9, 8);
        std::ofstream out(dir.file("short.ckpt"), std::ios::binary);
        out << text;
    }
    try {
        load_checkpoint(dir.file("short.ckpt"));
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("head.bias") != std::string::npos);
    }
}

TEST_CASE("history CSV uses the documented header") {
    testutil::TempDir dir("hist");
    write_history_csv({{0.5, 0.75}, {0.25, 0.5}}, dir.file("history.csv"));
    std::ifstream in(dir.file("history.csv"));
    std::string line;
    std::getline(in, line);
    CHECK(line == "epoch,train_loss,val_loss");
    std::getline(in, line);
    CHECK(line == "0,0.5,0.75");
}

TEST_SUITE_END();
