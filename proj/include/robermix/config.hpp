#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "robermix/dataset.hpp"
#include "robermix/integrate.hpp"
#include "robermix/kinetics.hpp"
#include "robermix/mixer.hpp"
#include "robermix/trainer.hpp"

namespace robermix {

struct KineticsConfig {
    RateConstants rates;
    StateVector y0{0.776, 6.913e-5, 0.081};
    double t0 = 0.0;
    double t_end = 1.0e5;
    double dt = 1.0;
    ToleranceSpec tol;

    void validate() const;
};

// Evaluation-side knobs; the eval mode itself comes from the CLI flag.
struct EvalConfig {
    std::string mode = "batchwise";  // "batchwise" | "dynamic" | "both"

    void validate() const;
};

// The full experiment: generation, split, model, training, evaluation.
struct ExperimentConfig {
    KineticsConfig kinetics;
    SplitSpec split;
    ModelConfig model;
    TrainConfig train;
    std::size_t window_stride = 1;      // training window stride
    std::size_t val_stride = 0;         // 0 = use the horizon (non-overlapping)
    EvalConfig eval;
    std::string output_dir = "out";

    void validate() const;
};

// Initial states from the reference experiments. The middle component of
// `paper-main` is printed with a decimal-comma typo in its source; it is
// interpreted as 0.081 here.
struct ScenarioPreset {
    std::string name;
    StateVector y0;
};

const std::vector<ScenarioPreset>& scenario_presets();
const ScenarioPreset& find_preset(const std::string& name);  // ConfigError if unknown

// Strict JSON round-trip: unknown keys are rejected with their full path.
ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json_text(const ExperimentConfig& config);
void save_config(const ExperimentConfig& config, const std::string& path);

// Applies one `--set key.path=value` override; value is parsed as JSON when
// possible, else treated as a string.
void apply_override(ExperimentConfig& config, const std::string& assignment);

// Scales the default experiment down to the CI-sized variant
// (stride 25, 60 epochs, embed 32, 4 blocks).
void apply_desk_profile(ExperimentConfig& config);

}  // namespace robermix
