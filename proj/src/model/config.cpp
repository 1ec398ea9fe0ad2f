#include "mtm/model/config.hpp"

#include <cmath>
#include <cstdio>

#include "mtm/errors.hpp"

namespace mtm::model {

using nlohmann::json;

void ModelConfig::validate() const {
    if (d_model < 2 || d_model % 2 != 0)
        throw ConfigError("d_model must be even and at least 2, got " + std::to_string(d_model));
    if (heads == 0 || d_model % heads != 0)
        throw ConfigError("heads must divide d_model");
    if (pool_ratio.empty()) throw ConfigError("pool_ratio must not be empty");
    if (pool_ratio.size() != 1 && pool_ratio.size() != n_blocks)
        throw ConfigError("pool_ratio is either one global value or one per block");
    for (std::size_t r : pool_ratio)
        if (r < 1) throw ConfigError("pool_ratio entries must be at least 1");
    if (!(dropout >= 0.0) || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive and finite");
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
    if (pooling_kind != "concat" && pooling_kind != "max" && pooling_kind != "avg")
        throw ConfigError("pooling_kind must be concat, max or avg");
    if (use_channel_attention && channel_attention_as_mlp)
        throw ConfigError("channel_attention_as_mlp requires channel_attention off");
    if (n_classes == 1) throw ConfigError("n_classes must be at least 2 when set");
}

namespace {

const json& need(const json& j, const char* key) { return j.at(key); }

std::size_t as_uint(const json& v, const char* key) {
    if (!v.is_number_integer() || (v.is_number_integer() && v.get<long long>() < 0))
        throw ConfigError(std::string(key) + " must be a non-negative integer");
    return std::size_t(v.get<long long>());
}

double as_num(const json& v, const char* key) {
    if (!v.is_number()) throw ConfigError(std::string(key) + " must be a number");
    return v.get<double>();
}

bool as_bool(const json& v, const char* key) {
    if (!v.is_boolean()) throw ConfigError(std::string(key) + " must be a boolean");
    return v.get<bool>();
}

} // namespace

ModelConfig config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    static const char* known[] = {"d_model",     "n_blocks",   "pool_ratio",
                                  "heads",       "dropout",    "lr",
                                  "epochs",      "batch_size", "seed",
                                  "pooling",     "cls",        "mixing",
                                  "channel_attention", "channel_attention_as_mlp",
                                  "pooling_kind", "class_weighting",
                                  "n_channels",  "n_classes"};
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* k : known) ok |= item.key() == k;
        if (!ok) throw ConfigError("unknown config key: " + item.key());
    }

    ModelConfig c;
    if (j.contains("d_model")) c.d_model = as_uint(need(j, "d_model"), "d_model");
    if (j.contains("n_blocks")) c.n_blocks = as_uint(need(j, "n_blocks"), "n_blocks");
    if (j.contains("pool_ratio")) {
        const json& r = j["pool_ratio"];
        c.pool_ratio.clear();
        if (r.is_array()) {
            for (const auto& e : r) c.pool_ratio.push_back(as_uint(e, "pool_ratio"));
        } else {
            c.pool_ratio.push_back(as_uint(r, "pool_ratio"));
        }
    }
    if (j.contains("heads")) c.heads = as_uint(j["heads"], "heads");
    if (j.contains("dropout")) c.dropout = as_num(j["dropout"], "dropout");
    if (j.contains("lr")) c.lr = as_num(j["lr"], "lr");
    if (j.contains("epochs")) c.epochs = as_uint(j["epochs"], "epochs");
    if (j.contains("batch_size")) c.batch_size = as_uint(j["batch_size"], "batch_size");
    if (j.contains("seed")) {
        const json& s = j["seed"];
        if (!s.is_number_integer()) throw ConfigError("seed must be an integer");
        c.seed = s.get<std::uint64_t>();
    }
    if (j.contains("pooling")) c.use_pooling = as_bool(j["pooling"], "pooling");
    if (j.contains("cls")) c.use_cls = as_bool(j["cls"], "cls");
    if (j.contains("mixing")) c.use_mixing = as_bool(j["mixing"], "mixing");
    if (j.contains("channel_attention"))
        c.use_channel_attention = as_bool(j["channel_attention"], "channel_attention");
    if (j.contains("channel_attention_as_mlp"))
        c.channel_attention_as_mlp =
            as_bool(j["channel_attention_as_mlp"], "channel_attention_as_mlp");
    if (j.contains("pooling_kind")) {
        if (!j["pooling_kind"].is_string()) throw ConfigError("pooling_kind must be a string");
        c.pooling_kind = j["pooling_kind"].get<std::string>();
    }
    if (j.contains("class_weighting"))
        c.class_weighting = as_bool(j["class_weighting"], "class_weighting");
    if (j.contains("n_channels")) c.n_channels = as_uint(j["n_channels"], "n_channels");
    if (j.contains("n_classes")) c.n_classes = as_uint(j["n_classes"], "n_classes");
    c.validate();
    return c;
}

json config_to_json(const ModelConfig& c) {
    json j;
    j["d_model"] = c.d_model;
    j["n_blocks"] = c.n_blocks;
    j["pool_ratio"] = c.pool_ratio;
    j["heads"] = c.heads;
    j["dropout"] = c.dropout;
    j["lr"] = c.lr;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["seed"] = c.seed;
    j["pooling"] = c.use_pooling;
    j["cls"] = c.use_cls;
    j["mixing"] = c.use_mixing;
    j["channel_attention"] = c.use_channel_attention;
    j["channel_attention_as_mlp"] = c.channel_attention_as_mlp;
    j["pooling_kind"] = c.pooling_kind;
    j["class_weighting"] = c.class_weighting;
    j["n_channels"] = c.n_channels;
    j["n_classes"] = c.n_classes;
    return j;
}

std::string config_hash(const ModelConfig& c) {
    std::string s = config_to_json(c).dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

} // namespace mtm::model
