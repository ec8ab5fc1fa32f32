#include "robermix/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "robermix/errors.hpp"

namespace robermix {

using nlohmann::json;

namespace {

// Rejects keys that are not in the allowed set, reporting the full path.
void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& path) {
    if (!j.is_object()) throw ConfigError("expected an object at " + path);
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.contains(it.key()))
            throw ConfigError("unknown config key '" + path + it.key() + "'");
    }
}

template <typename T>
void read_field(const json& j, const char* key, T& out, const std::string& path) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("bad value for '" + path + key + "'");
    }
}

}  // namespace

void KineticsConfig::validate() const {
    rates.validate();
    tol.validate();
    for (double v : y0)
        if (!std::isfinite(v) || v < 0.0)
            throw ConfigError("kinetics.y0 components must be finite and nonnegative");
    if (!(t_end > t0)) throw ConfigError("kinetics.t_end must exceed t0");
    if (!(dt > 0.0)) throw ConfigError("kinetics.dt must be positive");
    SamplingSpec spec{dt, t0, t_end};
    spec.validate();
}

void EvalConfig::validate() const {
    if (mode != "batchwise" && mode != "dynamic" && mode != "both")
        throw ConfigError("eval.mode must be batchwise, dynamic or both");
}

void ExperimentConfig::validate() const {
    kinetics.validate();
    split.validate();
    model.validate();
    train.validate();
    eval.validate();
    if (window_stride == 0) throw ConfigError("window_stride must be >= 1");
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

const std::vector<ScenarioPreset>& scenario_presets() {
    static const std::vector<ScenarioPreset> presets = {
        {"paper-main", {0.776, 6.913e-5, 0.081}},
        {"appendix-b1", {0.879, 7.816e-5, 0.077}},
        {"appendix-b2", {0.693, 4.254e-5, 0.390}},
    };
    return presets;
}

const ScenarioPreset& find_preset(const std::string& name) {
    for (const auto& p : scenario_presets())
        if (p.name == name) return p;
    std::string known;
    for (const auto& p : scenario_presets()) known += " " + p.name;
    throw ConfigError("unknown preset '" + name + "'; known presets:" + known);
}

namespace {

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig cfg;
    check_keys(j, {"kinetics", "split", "model", "train", "window_stride", "val_stride", "eval",
                   "output_dir"},
               "");

    if (j.contains("kinetics")) {
        const json& k = j.at("kinetics");
        check_keys(k, {"k1", "k2", "k3", "y0", "t0", "t_end", "dt", "rtol", "atol"},
                   "kinetics.");
        read_field(k, "k1", cfg.kinetics.rates.k1, "kinetics.");
        read_field(k, "k2", cfg.kinetics.rates.k2, "kinetics.");
        read_field(k, "k3", cfg.kinetics.rates.k3, "kinetics.");
        if (k.contains("y0")) {
            std::vector<double> y0;
            read_field(k, "y0", y0, "kinetics.");
            if (y0.size() != 3) throw ConfigError("kinetics.y0 must have 3 entries");
            std::copy(y0.begin(), y0.end(), cfg.kinetics.y0.begin());
        }
        read_field(k, "t0", cfg.kinetics.t0, "kinetics.");
        read_field(k, "t_end", cfg.kinetics.t_end, "kinetics.");
        read_field(k, "dt", cfg.kinetics.dt, "kinetics.");
        read_field(k, "rtol", cfg.kinetics.tol.rtol, "kinetics.");
        read_field(k, "atol", cfg.kinetics.tol.atol, "kinetics.");
    }
    if (j.contains("split")) {
        const json& s = j.at("split");
        check_keys(s, {"train", "val", "test"}, "split.");
        read_field(s, "train", cfg.split.train, "split.");
        read_field(s, "val", cfg.split.val, "split.");
        read_field(s, "test", cfg.split.test, "split.");
    }
    if (j.contains("model")) {
        const json& m = j.at("model");
        check_keys(m,
                   {"channels", "context_length", "horizon", "patch_length", "patch_stride",
                    "embed_dim", "num_blocks", "expansion", "dropout"},
                   "model.");
        read_field(m, "channels", cfg.model.channels, "model.");
        read_field(m, "context_length", cfg.model.context_length, "model.");
        read_field(m, "horizon", cfg.model.horizon, "model.");
        read_field(m, "patch_length", cfg.model.patch_length, "model.");
        read_field(m, "patch_stride", cfg.model.patch_stride, "model.");
        read_field(m, "embed_dim", cfg.model.embed_dim, "model.");
        read_field(m, "num_blocks", cfg.model.num_blocks, "model.");
        read_field(m, "expansion", cfg.model.expansion, "model.");
        read_field(m, "dropout", cfg.model.dropout, "model.");
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        check_keys(t,
                   {"epochs", "batch_size", "learning_rate", "lr_min", "beta1", "beta2",
                    "epsilon", "weight_decay", "seed", "shuffle", "threads"},
                   "train.");
        read_field(t, "epochs", cfg.train.epochs, "train.");
        read_field(t, "batch_size", cfg.train.batch_size, "train.");
        read_field(t, "learning_rate", cfg.train.learning_rate, "train.");
        read_field(t, "lr_min", cfg.train.lr_min, "train.");
        read_field(t, "beta1", cfg.train.beta1, "train.");
        read_field(t, "beta2", cfg.train.beta2, "train.");
        read_field(t, "epsilon", cfg.train.epsilon, "train.");
        read_field(t, "weight_decay", cfg.train.weight_decay, "train.");
        read_field(t, "seed", cfg.train.seed, "train.");
        read_field(t, "shuffle", cfg.train.shuffle, "train.");
        read_field(t, "threads", cfg.train.threads, "train.");
    }
    read_field(j, "window_stride", cfg.window_stride, "");
    read_field(j, "val_stride", cfg.val_stride, "");
    if (j.contains("eval")) {
        const json& e = j.at("eval");
        check_keys(e, {"mode"}, "eval.");
        read_field(e, "mode", cfg.eval.mode, "eval.");
    }
    read_field(j, "output_dir", cfg.output_dir, "");

    cfg.validate();
    return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["kinetics"] = {{"k1", cfg.kinetics.rates.k1}, {"k2", cfg.kinetics.rates.k2},
                     {"k3", cfg.kinetics.rates.k3}, {"y0", cfg.kinetics.y0},
                     {"t0", cfg.kinetics.t0},       {"t_end", cfg.kinetics.t_end},
                     {"dt", cfg.kinetics.dt},       {"rtol", cfg.kinetics.tol.rtol},
                     {"atol", cfg.kinetics.tol.atol}};
    j["split"] = {{"train", cfg.split.train}, {"val", cfg.split.val}, {"test", cfg.split.test}};
    j["model"] = {{"channels", cfg.model.channels},
                  {"context_length", cfg.model.context_length},
                  {"horizon", cfg.model.horizon},
                  {"patch_length", cfg.model.patch_length},
                  {"patch_stride", cfg.model.patch_stride},
                  {"embed_dim", cfg.model.embed_dim},
                  {"num_blocks", cfg.model.num_blocks},
                  {"expansion", cfg.model.expansion},
                  {"dropout", cfg.model.dropout}};
    j["train"] = {{"epochs", cfg.train.epochs},
                  {"batch_size", cfg.train.batch_size},
                  {"learning_rate", cfg.train.learning_rate},
                  {"lr_min", cfg.train.lr_min},
                  {"beta1", cfg.train.beta1},
                  {"beta2", cfg.train.beta2},
                  {"epsilon", cfg.train.epsilon},
                  {"weight_decay", cfg.train.weight_decay},
                  {"seed", cfg.train.seed},
                  {"shuffle", cfg.train.shuffle},
                  {"threads", cfg.train.threads}};
    j["window_stride"] = cfg.window_stride;
    j["val_stride"] = cfg.val_stride;
    j["eval"] = {{"mode", cfg.eval.mode}};
    j["output_dir"] = cfg.output_dir;
    return j;
}

}  // namespace

ExperimentConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return config_from_json(j);
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return config_from_json_text(text);
}

std::string config_to_json_text(const ExperimentConfig& config) {
    return config_to_json(config).dump(2) + "\n";
}

void save_config(const ExperimentConfig& config, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << config_to_json_text(config);
    if (!out) throw IoError("write failed: " + path);
}

void apply_override(ExperimentConfig& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("--set expects key.path=value, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);

    json pointer_path = "/" + key;
    for (auto& ch : pointer_path.get_ref<std::string&>())
        if (ch == '.') ch = '/';

    json j = json::parse(config_to_json_text(config));
    json parsed_value;
    try {
        parsed_value = json::parse(value);
    } catch (const json::exception&) {
        parsed_value = value;  // plain string
    }
    try {
        const json::json_pointer ptr(pointer_path.get<std::string>());
        if (!j.contains(ptr)) throw ConfigError("unknown config key '" + key + "'");
        j[ptr] = parsed_value;
    } catch (const json::exception&) {
        throw ConfigError("cannot apply override '" + assignment + "'");
    }
    config = config_from_json_text(j.dump());
}

void apply_desk_profile(ExperimentConfig& config) {
    config.window_stride = 25;
    config.train.epochs = 60;
    config.model.embed_dim = 32;
    config.model.num_blocks = 4;
}

}  // namespace robermix
