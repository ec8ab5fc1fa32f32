#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "robermix/timeseries.hpp"
#include "robermix/trainer.hpp"
#include "testutil.hpp"

TEST_SUITE_BEGIN("cli");

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

RunResult run_cli(const std::string& args) {
    const std::string cmd = std::string(ROBERMIX_CLI_PATH) + " " + args + " 2>&1";
    std::array<char, 4096> buf{};
    RunResult result;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    while (std::fgets(buf.data(), buf.size(), pipe) != nullptr) result.output += buf.data();
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

}  // namespace

TEST_CASE("generate writes the requested number of rows") {
    testutil::TempDir dir("cli_gen");
    const auto r = run_cli("generate --preset paper-main --set kinetics.t_end=10 --out " +
                           dir.str());
    CHECK(r.exit_code == 0);
    const auto series = robermix::read_csv(dir.file("data.csv"));
    CHECK(series.length() == 11);
    CHECK(std::filesystem::exists(dir.file("data.meta.json")));
    CHECK(std::filesystem::exists(dir.file("config.json")));
}

TEST_CASE("unknown presets and config keys exit with code 1") {
    testutil::TempDir dir("cli_bad");
    CHECK(run_cli("generate --preset unknown --out " + dir.str()).exit_code == 1);
    CHECK(run_cli("generate --set bogus.key=1 --out " + dir.str()).exit_code == 1);
    CHECK(run_cli("generate --set train.epochs=0 --out " + dir.str()).exit_code == 1);
}

TEST_CASE("missing input files exit with code 3") {
    testutil::TempDir dir("cli_io");
    const auto r = run_cli("train --data " + dir.file("absent.csv") + " --out " + dir.str());
    CHECK(r.exit_code == 3);
}

TEST_CASE("full mini pipeline through the binary") {
    testutil::TempDir dir("cli_e2e");
    const std::string overrides =
        " --set kinetics.t_end=2000"
        " --set model.context_length=64 --set model.horizon=16"
        " --set model.embed_dim=8 --set model.num_blocks=2"
        " --set window_stride=8 --set train.epochs=1 --set train.batch_size=32";

    CHECK(run_cli("generate --preset paper-main" + overrides + " --out " + dir.str())
              .exit_code == 0);
    CHECK(run_cli("train --data " + dir.file("data.csv") + overrides + " --out " + dir.str())
              .exit_code == 0);

    const auto ev = run_cli("eval --checkpoint " + dir.file("best.ckpt") + " --data " +
                            dir.file("data.csv") + overrides + " --mode both --out " +
                            dir.str());
    CHECK(ev.exit_code == 0);
    CHECK(ev.output.find("mean=") != std::string::npos);
    CHECK(std::filesystem::exists(dir.file("report_batchwise.json")));
    CHECK(std::filesystem::exists(dir.file("report_dynamic.json")));
    CHECK(std::filesystem::exists(dir.file("plot_batchwise.svg")));

    // oracle fixture prints exact zeros
    robermix::Checkpoint oracle;
    oracle.kind = "ground_truth_oracle";
    oracle.model.context_length = 64;
    oracle.model.horizon = 16;
    oracle.model.embed_dim = 8;
    oracle.model.num_blocks = 2;
    oracle.norm.mean.assign(3, 0.0);
    oracle.norm.std.assign(3, 1.0);
    oracle.data_dt = 1.0;
    oracle.channel_names = {"y1", "y2", "y3"};
    robermix::save_checkpoint(oracle, dir.file("oracle.ckpt"));
    const auto zr = run_cli("eval --checkpoint " + dir.file("oracle.ckpt") + " --data " +
                            dir.file("data.csv") + overrides + " --out " + dir.str());
    CHECK(zr.exit_code == 0);
    CHECK(zr.output.find("mean=0.0000% std=0.0000%") != std::string::npos);

    // plot subcommand over the generated series and the forecast overlay
    const auto pr = run_cli("plot " + dir.file("data.csv") + " --out " + dir.file("t.svg"));
    CHECK(pr.exit_code == 0);
    CHECK(std::filesystem::exists(dir.file("t.svg")));
}

TEST_CASE("plotting series with mismatched sampling exits with code 3") {
    testutil::TempDir dir("cli_plot");
    const auto a = testutil::make_series(1, 10, 1.0,
                                         [](std::size_t, std::size_t i) { return double(i); });
    const auto b = testutil::make_series(1, 10, 2.0,
                                         [](std::size_t, std::size_t i) { return double(i); });
    robermix::write_csv(a, dir.file("a.csv"));
    robermix::write_csv(b, dir.file("b.csv"));
    const auto r = run_cli("plot " + dir.file("a.csv") + " " + dir.file("b.csv") + " --out " +
                           dir.file("o.svg"));
    CHECK(r.exit_code == 3);
}

TEST_SUITE_END();
