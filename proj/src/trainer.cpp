#include "robermix/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "robermix/errors.hpp"
#include "robermix/parallel.hpp"

namespace robermix {

using nlohmann::json;

namespace {

constexpr int kCheckpointVersion = 1;

// --- base64 (standard alphabet, padded) over little-endian doubles ---

const char* kB64Alphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const unsigned char* data, std::size_t len) {
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    for (std::size_t i = 0; i < len; i += 3) {
        const unsigned b0 = data[i];
        const unsigned b1 = i + 1 < len ? data[i + 1] : 0;
        const unsigned b2 = i + 2 < len ? data[i + 2] : 0;
        out += kB64Alphabet[b0 >> 2];
        out += kB64Alphabet[((b0 & 0x3) << 4) | (b1 >> 4)];
        out += i + 1 < len ? kB64Alphabet[((b1 & 0xF) << 2) | (b2 >> 6)] : '=';
        out += i + 2 < len ? kB64Alphabet[b2 & 0x3F] : '=';
    }
    return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
    auto value_of = [](char ch) -> int {
        if (ch >= 'A' && ch <= 'Z') return ch - 'A';
        if (ch >= 'a' && ch <= 'z') return ch - 'a' + 26;
        if (ch >= '0' && ch <= '9') return ch - '0' + 52;
        if (ch == '+') return 62;
        if (ch == '/') return 63;
        return -1;
    };
    if (text.size() % 4 != 0) throw FormatError("base64 payload length not a multiple of 4");
    std::vector<unsigned char> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        int v[4];
        int pad = 0;
        for (int k = 0; k < 4; ++k) {
            const char ch = text[i + k];
            if (ch == '=') {
                v[k] = 0;
                ++pad;
            } else {
                v[k] = value_of(ch);
                if (v[k] < 0 || pad > 0) throw FormatError("invalid base64 payload");
            }
        }
        out.push_back(static_cast<unsigned char>((v[0] << 2) | (v[1] >> 4)));
        if (pad < 2) out.push_back(static_cast<unsigned char>(((v[1] & 0xF) << 4) | (v[2] >> 2)));
        if (pad < 1) out.push_back(static_cast<unsigned char>(((v[2] & 0x3) << 6) | v[3]));
    }
    return out;
}

json encode_array(std::span<const std::size_t> shape, std::span<const double> data) {
    std::vector<unsigned char> bytes(data.size() * 8);
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::uint64_t u;
        std::memcpy(&u, &data[i], 8);
        for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<unsigned char>(u >> (8 * b));
    }
    json j;
    j["shape"] = std::vector<std::size_t>(shape.begin(), shape.end());
    j["data"] = base64_encode(bytes.data(), bytes.size());
    return j;
}

std::vector<double> decode_array(const json& j, const std::string& name,
                                 std::span<const std::size_t> expect_shape) {
    if (!j.is_object() || !j.contains("shape") || !j.contains("data"))
        throw FormatError("array '" + name + "' must carry shape and data");
    const auto shape = j.at("shape").get<std::vector<std::size_t>>();
    std::size_t expected = 1;
    for (std::size_t e : shape) expected *= e;
    if (!expect_shape.empty() &&
        !std::equal(shape.begin(), shape.end(), expect_shape.begin(), expect_shape.end()))
        throw FormatError("array '" + name + "' has a shape disagreeing with the config");
    const auto bytes = base64_decode(j.at("data").get<std::string>());
    if (bytes.size() != expected * 8)
        throw FormatError("array '" + name + "' payload holds " +
                          std::to_string(bytes.size() / 8) + " values, expected " +
                          std::to_string(expected));
    std::vector<double> out(expected);
    for (std::size_t i = 0; i < expected; ++i) {
        std::uint64_t u = 0;
        for (int b = 0; b < 8; ++b)
            u |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
        std::memcpy(&out[i], &u, 8);
    }
    return out;
}

json model_to_json(const ModelConfig& m) {
    return json{{"channels", m.channels},
                {"context_length", m.context_length},
                {"horizon", m.horizon},
                {"patch_length", m.patch_length},
                {"patch_stride", m.patch_stride},
                {"embed_dim", m.embed_dim},
                {"num_blocks", m.num_blocks},
                {"expansion", m.expansion},
                {"dropout", m.dropout}};
}

ModelConfig model_from_json(const json& j) {
    ModelConfig m;
    try {
        m.channels = j.at("channels").get<std::size_t>();
        m.context_length = j.at("context_length").get<std::size_t>();
        m.horizon = j.at("horizon").get<std::size_t>();
        m.patch_length = j.at("patch_length").get<std::size_t>();
        m.patch_stride = j.at("patch_stride").get<std::size_t>();
        m.embed_dim = j.at("embed_dim").get<std::size_t>();
        m.num_blocks = j.at("num_blocks").get<std::size_t>();
        m.expansion = j.at("expansion").get<std::size_t>();
        m.dropout = j.at("dropout").get<double>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad model config: ") + e.what());
    }
    return m;
}

json train_to_json(const TrainConfig& t) {
    return json{{"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"learning_rate", t.learning_rate},
                {"lr_min", t.lr_min},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"epsilon", t.epsilon},
                {"weight_decay", t.weight_decay},
                {"seed", t.seed},
                {"shuffle", t.shuffle}};
}

TrainConfig train_from_json(const json& j) {
    TrainConfig t;
    try {
        t.epochs = j.at("epochs").get<std::size_t>();
        t.batch_size = j.at("batch_size").get<std::size_t>();
        t.learning_rate = j.at("learning_rate").get<double>();
        t.lr_min = j.at("lr_min").get<double>();
        t.beta1 = j.at("beta1").get<double>();
        t.beta2 = j.at("beta2").get<double>();
        t.epsilon = j.at("epsilon").get<double>();
        t.weight_decay = j.at("weight_decay").get<double>();
        t.seed = j.at("seed").get<std::uint64_t>();
        t.shuffle = j.at("shuffle").get<bool>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad train config: ") + e.what());
    }
    return t;
}

double cosine_lr(const TrainConfig& cfg, std::size_t epoch) {
    const double lr_max = cfg.learning_rate;
    const double lr_min = std::min(cfg.lr_min, lr_max);
    if (cfg.epochs <= 1) return lr_max;
    const double phase = static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1);
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * phase));
}

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        const std::size_t j = rng.bounded(i);
        std::swap(idx[i - 1], idx[j]);
    }
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs == 0) throw ConfigError("epochs must be >= 1");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
    if (!(lr_min >= 0.0)) throw ConfigError("lr_min must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
        throw ConfigError("betas must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
}

OptimizerState OptimizerState::for_params(const Parameters& params) {
    OptimizerState s;
    s.m.assign(params.values.size(), 0.0);
    s.v.assign(params.values.size(), 0.0);
    return s;
}

void adamw_step(Parameters& params, std::span<const double> grads, OptimizerState& state,
                const TrainConfig& config, double lr) {
    if (grads.size() != params.values.size() || state.m.size() != params.values.size())
        throw ShapeError("gradient/state buffers do not match the parameter buffer");
    ++state.step;
    const double b1 = config.beta1;
    const double b2 = config.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));

    for (const auto& spec : params.layout.arrays) {
        const double wd = spec.weight_decay ? config.weight_decay : 0.0;
        double* theta = params.values.data() + spec.offset;
        double* m = state.m.data() + spec.offset;
        double* v = state.v.data() + spec.offset;
        const double* g = grads.data() + spec.offset;
        for (std::size_t i = 0; i < spec.size; ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            theta[i] -= lr * mhat / (std::sqrt(vhat) + config.epsilon) + lr * wd * theta[i];
        }
    }
}

FitResult fit(Parameters& params, WindowedData train, WindowedData val,
              const TrainConfig& config, const CheckpointContext& ctx) {
    config.validate();
    if (train.series == nullptr || train.windows == nullptr || train.windows->size() == 0)
        throw SplitError("training window set is empty");
    if (val.series == nullptr || val.windows == nullptr || val.windows->size() == 0)
        throw SplitError("validation window set is empty");

    const std::size_t n_train = train.windows->size();
    const std::size_t n_val = val.windows->size();
    const std::size_t n_params = params.values.size();
    const std::size_t slots = std::max<std::size_t>(config.threads, 1);

    ThreadPool pool(slots > 1 ? slots : 0);
    struct Slot {
        ForwardTrace trace;
        std::vector<double> context, target, dpred, grads;
        double loss = 0.0;
        std::exception_ptr error;
    };
    std::vector<Slot> slot(slots);
    for (auto& s : slot) s.grads.assign(n_params, 0.0);
    auto rethrow_slot_errors = [&](std::size_t used, std::size_t epoch) {
        for (std::size_t k = 0; k < used; ++k) {
            if (!slot[k].error) continue;
            try {
                std::rethrow_exception(slot[k].error);
            } catch (const NonFiniteError& e) {
                throw NonFiniteError("epoch " + std::to_string(epoch) + ": " + e.what());
            }
        }
    };

    std::vector<double> batch_grads(n_params);
    std::vector<std::size_t> order(n_train);
    for (std::size_t i = 0; i < n_train; ++i) order[i] = i;

    Rng root(config.seed);
    Rng shuffle_rng = root.fork(0);
    OptimizerState opt = OptimizerState::for_params(params);
    FitResult result;
    result.history.reserve(config.epochs);

    std::vector<double> best_params;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        if (config.shuffle) shuffle_indices(order, shuffle_rng);
        const double lr = cosine_lr(config, epoch);

        double train_loss_sum = 0.0;
        for (std::size_t batch_start = 0; batch_start < n_train;
             batch_start += config.batch_size) {
            const std::size_t batch_len = std::min(config.batch_size, n_train - batch_start);
            std::memset(batch_grads.data(), 0, n_params * sizeof(double));
            const double inv_batch = 1.0 / static_cast<double>(batch_len);

            for (std::size_t group = 0; group < batch_len; group += slots) {
                const std::size_t group_len = std::min(slots, batch_len - group);
                std::vector<std::function<void()>> tasks;
                tasks.reserve(group_len);
                for (std::size_t k = 0; k < group_len; ++k) {
                    const std::size_t widx = order[batch_start + group + k];
                    Slot& s = slot[k];
                    // per-window dropout stream: independent of batching and
                    // thread count, fixed by (seed, epoch, window index)
                    Rng dropout_rng = root.fork(1 + epoch * (n_train + 1) + widx);
                    tasks.emplace_back([&, widx, k, dropout_rng]() mutable {
                        Slot& sl = slot[k];
                        sl.error = nullptr;
                        try {
                            copy_context(*train.series, *train.windows, widx, sl.context);
                            copy_target(*train.series, *train.windows, widx, sl.target);
                            forward(params, sl.context, sl.trace, &dropout_rng);
                            sl.loss = mse_loss(sl.trace.prediction, sl.target);
                            sl.dpred.resize(sl.trace.prediction.size());
                            mse_gradient(sl.trace.prediction, sl.target, sl.dpred, inv_batch);
                            std::memset(sl.grads.data(), 0, n_params * sizeof(double));
                            backward_into(params, sl.trace, sl.dpred, sl.grads);
                        } catch (...) {
                            sl.error = std::current_exception();
                        }
                    });
                }
                pool.run(std::move(tasks));
                rethrow_slot_errors(group_len, epoch);
                // window-ordered accumulation keeps runs bitwise reproducible
                // at any thread count
                for (std::size_t k = 0; k < group_len; ++k) {
                    const double* g = slot[k].grads.data();
                    for (std::size_t i = 0; i < n_params; ++i) batch_grads[i] += g[i];
                    train_loss_sum += slot[k].loss;
                }
            }
            adamw_step(params, batch_grads, opt, config, lr);
        }

        const double train_loss = train_loss_sum / static_cast<double>(n_train);

        double val_loss_sum = 0.0;
        for (std::size_t group = 0; group < n_val; group += slots) {
            const std::size_t group_len = std::min(slots, n_val - group);
            std::vector<std::function<void()>> tasks;
            tasks.reserve(group_len);
            for (std::size_t k = 0; k < group_len; ++k) {
                const std::size_t widx = group + k;
                tasks.emplace_back([&, widx, k] {
                    Slot& sl = slot[k];
                    sl.error = nullptr;
                    try {
                        copy_context(*val.series, *val.windows, widx, sl.context);
                        copy_target(*val.series, *val.windows, widx, sl.target);
                        forward(params, sl.context, sl.trace, nullptr);
                        sl.loss = mse_loss(sl.trace.prediction, sl.target);
                    } catch (...) {
                        sl.error = std::current_exception();
                    }
                });
            }
            pool.run(std::move(tasks));
            rethrow_slot_errors(group_len, epoch);
            for (std::size_t k = 0; k < group_len; ++k) val_loss_sum += slot[k].loss;
        }
        const double val_loss = val_loss_sum / static_cast<double>(n_val);

        if (!std::isfinite(train_loss) || !std::isfinite(val_loss))
            throw NonFiniteError("loss diverged at epoch " + std::to_string(epoch));

        result.history.push_back(EpochStats{train_loss, val_loss});
        if (val_loss < best_val) {
            best_val = val_loss;
            best_epoch = epoch;
            best_params = params.values;
        }
    }

    auto make_ckpt = [&](std::vector<double> values, std::size_t sel) {
        Checkpoint c;
        c.model = params.config;
        c.param_values = std::move(values);
        c.norm = ctx.norm;
        c.train = config;
        c.history = result.history;
        c.selected_epoch = sel;
        c.data_dt = ctx.data_dt;
        c.channel_names = ctx.channel_names;
        return c;
    };
    result.best = make_ckpt(std::move(best_params), best_epoch);
    result.last = make_ckpt(params.values, config.epochs - 1);
    return result;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    json j;
    j["format_version"] = ckpt.format_version;
    j["kind"] = ckpt.kind;
    j["model"] = model_to_json(ckpt.model);
    j["train"] = train_to_json(ckpt.train);
    j["selected_epoch"] = ckpt.selected_epoch;
    j["data"] = {{"dt", ckpt.data_dt}, {"channel_names", ckpt.channel_names}};

    const std::size_t c = ckpt.norm.mean.size();
    const std::size_t cshape[] = {c};
    j["normalization"]["mean"] = encode_array(cshape, ckpt.norm.mean);
    j["normalization"]["std"] = encode_array(cshape, ckpt.norm.std);

    std::vector<double> tl, vl;
    for (const auto& e : ckpt.history) {
        tl.push_back(e.train_loss);
        vl.push_back(e.val_loss);
    }
    const std::size_t hshape[] = {ckpt.history.size()};
    j["history"]["train_loss"] = encode_array(hshape, tl);
    j["history"]["val_loss"] = encode_array(hshape, vl);

    json params = json::object();
    if (ckpt.kind == "patch_mixer") {
        const auto layout = ParamLayout::for_config(ckpt.model);
        if (ckpt.param_values.size() != layout.total)
            throw FormatError("checkpoint parameter buffer does not match the model config");
        for (const auto& spec : layout.arrays) {
            params[spec.name] = encode_array(
                spec.shape, {ckpt.param_values.data() + spec.offset, spec.size});
        }
    }
    j["params"] = params;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
    if (!out) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError("bad checkpoint JSON in " + path + ": " + e.what());
    }

    Checkpoint ckpt;
    if (!j.contains("format_version") || !j.at("format_version").is_number_integer() ||
        j.at("format_version").get<int>() != kCheckpointVersion)
        throw FormatError("unsupported checkpoint format_version in " + path);
    ckpt.format_version = kCheckpointVersion;
    ckpt.kind = j.value("kind", std::string("patch_mixer"));
    if (ckpt.kind != "patch_mixer" && ckpt.kind != "ground_truth_oracle")
        throw FormatError("unknown checkpoint kind '" + ckpt.kind + "'");
    ckpt.model = model_from_json(j.at("model"));
    ckpt.model.validate();
    ckpt.train = train_from_json(j.at("train"));
    ckpt.selected_epoch = j.value("selected_epoch", std::size_t{0});
    try {
        ckpt.data_dt = j.at("data").at("dt").get<double>();
        ckpt.channel_names = j.at("data").at("channel_names").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad data block: ") + e.what());
    }

    const std::size_t c = ckpt.model.channels;
    const std::size_t cshape[] = {c};
    ckpt.norm.mean = decode_array(j.at("normalization").at("mean"), "normalization.mean", cshape);
    ckpt.norm.std = decode_array(j.at("normalization").at("std"), "normalization.std", cshape);

    const auto tl = decode_array(j.at("history").at("train_loss"), "history.train_loss", {});
    const auto vl = decode_array(j.at("history").at("val_loss"), "history.val_loss", {});
    if (tl.size() != vl.size()) throw FormatError("history arrays disagree in length");
    for (std::size_t i = 0; i < tl.size(); ++i)
        ckpt.history.push_back(EpochStats{tl[i], vl[i]});

    if (ckpt.kind == "patch_mixer") {
        const auto layout = ParamLayout::for_config(ckpt.model);
        ckpt.param_values.assign(layout.total, 0.0);
        const json& params = j.at("params");
        for (const auto& spec : layout.arrays) {
            if (!params.contains(spec.name))
                throw FormatError("checkpoint is missing parameter array '" + spec.name + "'");
            const auto values = decode_array(params.at(spec.name), spec.name, spec.shape);
            std::copy(values.begin(), values.end(), ckpt.param_values.begin() + spec.offset);
        }
        for (auto it = params.begin(); it != params.end(); ++it) {
            bool known = false;
            for (const auto& spec : layout.arrays)
                if (spec.name == it.key()) known = true;
            if (!known) throw FormatError("checkpoint has unknown parameter array '" +
                                          it.key() + "'");
        }
    }
    return ckpt;
}

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot open for writing: " + path);
    std::fputs("epoch,train_loss,val_loss\n", f);
    for (std::size_t i = 0; i < history.size(); ++i)
        std::fprintf(f, "%zu,%.17g,%.17g\n", i, history[i].train_loss, history[i].val_loss);
    if (std::fclose(f) != 0) throw IoError("close failed: " + path);
}

std::string file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const auto got = static_cast<std::size_t>(in.gcount());
        for (std::size_t i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (in.eof()) break;
    }
    char out[32];
    std::snprintf(out, sizeof(out), "fnv1a64:%016llx", static_cast<unsigned long long>(h));
    return out;
}

}  // namespace robermix
