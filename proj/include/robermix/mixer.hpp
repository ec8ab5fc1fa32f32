#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "robermix/rng.hpp"

namespace robermix {

// Dense row-major tensor of doubles. Deliberately minimal; the hot paths in
// forward/backward work on raw spans with explicit loop nests.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    static Tensor zeros(std::vector<std::size_t> shape);

    std::size_t size() const { return data.size(); }
    std::span<const double> view() const { return data; }
};

// PatchTSMixer hyperparameters.
struct ModelConfig {
    std::size_t channels = 3;
    std::size_t context_length = 512;
    std::size_t horizon = 100;
    std::size_t patch_length = 8;
    std::size_t patch_stride = 8;
    std::size_t embed_dim = 64;
    std::size_t num_blocks = 8;
    std::size_t expansion = 2;
    double dropout = 0.1;

    std::size_t num_patches() const { return (context_length - patch_length) / patch_stride + 1; }
    void validate() const;  // ShapeError if (H - p) % s != 0, ConfigError otherwise

    bool operator==(const ModelConfig&) const = default;
};

// One named parameter array inside the flat buffer.
struct ArraySpec {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
    bool weight_decay = false;  // true for weight matrices; biases and norms excluded
};

struct ParamLayout {
    std::vector<ArraySpec> arrays;
    std::size_t total = 0;

    static ParamLayout for_config(const ModelConfig& config);
    const ArraySpec& find(std::string_view name) const;  // FormatError if unknown
};

// All learnable weights plus a same-shaped gradient buffer.
struct Parameters {
    ModelConfig config;
    ParamLayout layout;
    std::vector<double> values;
    std::vector<double> grads;

    std::span<double> array(std::string_view name);
    std::span<const double> array(std::string_view name) const;
    std::span<double> grad(std::string_view name);
    void zero_grads();
};

std::size_t param_count(const ModelConfig& config);

// Xavier-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases, unit
// layer-norm scales. Deterministic per seed.
Parameters init_params(const ModelConfig& config, std::uint64_t seed);

// Cached activations for one residual MLP branch.
struct SubTrace {
    std::vector<double> xhat;     // layer-norm normalized input
    std::vector<double> inv_std;  // per normalized vector
    std::vector<double> u;        // layer-norm output (branch input)
    std::vector<double> z1;       // hidden pre-activation
    std::vector<double> act;      // dropout(gelu(z1)) as fed into the second layer
    std::vector<double> mask;     // dropout keep-scale (training mode only)
};

struct BlockTrace {
    SubTrace patch, feature, channel;
};

// Everything backward() needs; produced by one forward() call and consumed
// by exactly one backward() call. Reusable across calls to avoid churn.
struct ForwardTrace {
    ModelConfig config;
    bool consumed = true;
    bool training = false;
    std::vector<double> context;     // input copy (channels x H)
    std::vector<double> final_x;     // head input (channels x N x d)
    std::vector<double> prediction;  // channels x horizon
    std::vector<BlockTrace> blocks;
};

// Splits the context (channels x H, channel-major) into (channels, N, p).
Tensor patchify(std::span<const double> context, const ModelConfig& config);

// Full pipeline: patchify -> patch embedding -> num_blocks x [patch-mixing,
// feature-mixing, channel-mixing, each pre-normed with a residual] ->
// per-channel flatten -> linear head. Passing dropout_rng enables training
// mode; without it the pass is deterministic (evaluation mode).
// Throws ShapeError on a context size mismatch, NonFiniteError on overflow.
void forward(const Parameters& params, std::span<const double> context, ForwardTrace& trace,
             Rng* dropout_rng = nullptr);

// Mean over all entries of squared error. ShapeError if sizes differ.
double mse_loss(std::span<const double> pred, std::span<const double> target);

// d(mse)/d(pred) = 2/n * (pred - target), scaled by `scale`.
void mse_gradient(std::span<const double> pred, std::span<const double> target,
                  std::span<double> dpred, double scale = 1.0);

// Reverse-mode pass; accumulates into params.grads and consumes the trace.
// Throws TraceMismatch if the trace was consumed or built for another config.
void backward(Parameters& params, ForwardTrace& trace, std::span<const double> dpred);

// Same, accumulating into an explicit buffer (params stays read-only, so
// batch elements can run backward concurrently into separate buffers).
void backward_into(const Parameters& params, ForwardTrace& trace,
                   std::span<const double> dpred, std::span<double> grads);

}  // namespace robermix
