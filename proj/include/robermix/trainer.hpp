#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "robermix/dataset.hpp"
#include "robermix/mixer.hpp"

namespace robermix {

struct TrainConfig {
    std::size_t epochs = 300;
    std::size_t batch_size = 64;
    double learning_rate = 1.0e-3;
    double lr_min = 1.0e-5;  // cosine floor; clamped to learning_rate if larger
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1.0e-8;
    double weight_decay = 0.01;
    std::uint64_t seed = 42;
    bool shuffle = true;
    std::size_t threads = 1;

    void validate() const;
};

// AdamW first/second moments, shapes mirroring the flat parameter buffer.
struct OptimizerState {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t step = 0;

    static OptimizerState for_params(const Parameters& params);
};

// Decoupled-weight-decay Adam update:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   theta <- theta - lr * mhat/(sqrt(vhat)+eps) - lr * wd * theta
// Weight decay applies to weight matrices only; biases and layer-norm
// parameters are excluded.
void adamw_step(Parameters& params, std::span<const double> grads, OptimizerState& state,
                const TrainConfig& config, double lr);

struct EpochStats {
    double train_loss = 0.0;
    double val_loss = 0.0;
};

// Self-describing training artifact; round-trips bitwise through JSON with
// base64-encoded little-endian doubles for all numeric arrays.
struct Checkpoint {
    int format_version = 1;
    std::string kind = "patch_mixer";  // "ground_truth_oracle" is a test fixture
    ModelConfig model;
    std::vector<double> param_values;
    NormalizationStats norm;
    TrainConfig train;
    std::vector<EpochStats> history;
    std::size_t selected_epoch = 0;
    double data_dt = 1.0;  // sampling interval the model was trained on
    std::vector<std::string> channel_names;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Non-owning view of a windowed (already normalized) series.
struct WindowedData {
    const TimeSeries* series = nullptr;
    const WindowSet* windows = nullptr;
};

// Metadata stamped into checkpoints so they are loadable without context.
struct CheckpointContext {
    NormalizationStats norm;
    double data_dt = 1.0;
    std::vector<std::string> channel_names;
};

struct FitResult {
    Checkpoint best;
    Checkpoint last;
    std::vector<EpochStats> history;
};

// Full training loop: seeded shuffling, mini-batch AdamW with a cosine
// learning-rate schedule, per-epoch validation with dropout off, and
// best-validation model selection. Throws NonFiniteError (with the epoch in
// the message) if the loss diverges.
FitResult fit(Parameters& params, WindowedData train, WindowedData val,
              const TrainConfig& config, const CheckpointContext& ctx);

// `epoch,train_loss,val_loss` rows, %.17g.
void write_history_csv(const std::vector<EpochStats>& history, const std::string& path);

// FNV-1a 64-bit hash of a file's bytes, as "fnv1a64:<16 hex digits>".
std::string file_hash(const std::string& path);

}  // namespace robermix
