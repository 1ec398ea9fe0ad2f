#include "mtm/model/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mtm/errors.hpp"

namespace mtm::model {

using nlohmann::json;

namespace {

const char* B64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string b64_encode(const std::vector<unsigned char>& in) {
    std::string out;
    out.reserve((in.size() + 2) / 3 * 4);
    for (std::size_t i = 0; i < in.size(); i += 3) {
        std::uint32_t v = std::uint32_t(in[i]) << 16;
        if (i + 1 < in.size()) v |= std::uint32_t(in[i + 1]) << 8;
        if (i + 2 < in.size()) v |= std::uint32_t(in[i + 2]);
        out.push_back(B64[(v >> 18) & 63]);
        out.push_back(B64[(v >> 12) & 63]);
        out.push_back(i + 1 < in.size() ? B64[(v >> 6) & 63] : '=');
        out.push_back(i + 2 < in.size() ? B64[v & 63] : '=');
    }
    return out;
}

std::vector<unsigned char> b64_decode(const std::string& in) {
    if (in.size() % 4 != 0) throw DataError("parameter blob has a truncated base-64 group");
    int rev[256];
    std::fill(std::begin(rev), std::end(rev), -1);
    for (int i = 0; i < 64; ++i) rev[(unsigned char)B64[i]] = i;
    std::vector<unsigned char> out;
    out.reserve(in.size() / 4 * 3);
    for (std::size_t i = 0; i < in.size(); i += 4) {
        int pad = 0;
        std::uint32_t v = 0;
        for (int k = 0; k < 4; ++k) {
            char c = in[i + k];
            if (c == '=') {
                if (i + 4 != in.size() || k < 2) throw DataError("bad base-64 padding");
                ++pad;
                v <<= 6;
            } else {
                int d = rev[(unsigned char)c];
                if (d < 0) throw DataError("bad base-64 character in parameter blob");
                if (pad) throw DataError("bad base-64 padding");
                v = v << 6 | std::uint32_t(d);
            }
        }
        out.push_back((unsigned char)(v >> 16));
        if (pad < 2) out.push_back((unsigned char)(v >> 8));
        if (pad < 1) out.push_back((unsigned char)v);
    }
    return out;
}

std::vector<unsigned char> to_bytes(const MtmParams& p) {
    std::vector<unsigned char> bytes;
    bytes.reserve(p.total_size() * 8);
    for (const auto& [name, a] : p.groups)
        for (double x : a.data) {
            std::uint64_t u;
            std::memcpy(&u, &x, 8);
            for (int k = 0; k < 8; ++k) bytes.push_back((unsigned char)(u >> (8 * k)));
        }
    return bytes;
}

} // namespace

std::string checkpoint_to_json(const Checkpoint& ck) {
    json j;
    j["config"] = config_to_json(ck.params.config);
    j["params"] = b64_encode(to_bytes(ck.params));
    j["stats"] = {{"mean", ck.stats.mean}, {"std", ck.stats.std_dev}};
    j["epoch"] = ck.epoch;
    j["rng_state"] = ck.rng_state;
    return j.dump(2) + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("checkpoint is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw DataError("checkpoint must be a JSON object");
    for (const auto& item : j.items())
        if (item.key() != "config" && item.key() != "params" && item.key() != "stats" &&
            item.key() != "epoch" && item.key() != "rng_state")
            throw DataError("unknown checkpoint key: " + item.key());
    for (const char* k : {"config", "params", "stats", "epoch", "rng_state"})
        if (!j.contains(k)) throw DataError(std::string("checkpoint is missing ") + k);

    Checkpoint ck;
    ck.params.config = config_from_json(j["config"]);
    if (ck.params.config.n_channels == 0 || ck.params.config.n_classes == 0)
        throw DataError("checkpoint config lacks n_channels or n_classes");

    if (!j["params"].is_string()) throw DataError("checkpoint params must be a string");
    std::vector<unsigned char> bytes = b64_decode(j["params"].get<std::string>());
    std::vector<GroupSpec> specs = group_specs(ck.params.config);
    std::size_t want = 0;
    for (const GroupSpec& gs : specs) want += diff::numel(gs.shape);
    if (bytes.size() != want * 8)
        throw DataError("checkpoint blob holds " + std::to_string(bytes.size() / 8) +
                        " values, config expects " + std::to_string(want));
    std::size_t off = 0;
    for (const GroupSpec& gs : specs) {
        diff::Array a = diff::Array::zeros(gs.shape);
        for (double& x : a.data) {
            std::uint64_t u = 0;
            for (int k = 0; k < 8; ++k) u |= std::uint64_t(bytes[off + k]) << (8 * k);
            off += 8;
            std::memcpy(&x, &u, 8);
        }
        ck.params.groups.push_back({gs.name, std::move(a)});
    }
    if (!ck.params.all_finite()) throw DataError("checkpoint holds non-finite parameters");

    const json& st = j["stats"];
    if (!st.is_object() || !st.contains("mean") || !st.contains("std"))
        throw DataError("checkpoint stats need mean and std arrays");
    ck.stats.mean = st["mean"].get<std::vector<double>>();
    ck.stats.std_dev = st["std"].get<std::vector<double>>();
    if (ck.stats.mean.size() != ck.stats.std_dev.size() ||
        ck.stats.mean.size() != ck.params.config.n_channels)
        throw DataError("checkpoint stats do not match the channel count");

    if (!j["epoch"].is_number_integer() || j["epoch"].get<long long>() < 0)
        throw DataError("checkpoint epoch must be a non-negative integer");
    ck.epoch = j["epoch"].get<std::size_t>();
    if (!j["rng_state"].is_string()) throw DataError("checkpoint rng_state must be a string");
    ck.rng_state = j["rng_state"].get<std::string>();
    return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint to " + path);
    out << checkpoint_to_json(ck);
    if (!out.good()) throw DataError("failed writing checkpoint to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read checkpoint from " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return checkpoint_from_json(text);
}

} // namespace mtm::model
