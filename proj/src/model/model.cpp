#include "mtm/model/model.hpp"

#include <algorithm>
#include <cmath>

#include "mtm/errors.hpp"

namespace mtm::model {

using diff::Array;
using diff::Shape;
using diff::Var;

std::vector<GroupSpec> group_specs(const ModelConfig& c) {
    c.validate();
    if (c.n_channels == 0 || c.n_classes == 0)
        throw ConfigError("group layout needs n_channels and n_classes");
    std::size_t C = c.n_channels, D = c.d_model, M = c.n_classes;
    std::size_t pool_in = c.pooling_kind == "concat" ? 2 * D : D;

    std::vector<GroupSpec> gs;
    gs.push_back({"embed.channel", {C, D}});
    gs.push_back({"embed.cls", {C, D}});
    auto layer = [&](std::size_t l) {
        std::string p = "layer" + std::to_string(l) + ".";
        for (const char* m : {"wq", "wk", "wv"}) gs.push_back({p + "temporal." + m, {D, D}});
        if (c.use_mixing)
            for (const char* m : {"wq", "wk", "wv"}) gs.push_back({p + "mixing." + m, {D, D}});
        if (c.use_channel_attention) {
            for (const char* m : {"wq", "wk", "wv"}) gs.push_back({p + "channel." + m, {D, D}});
        } else if (c.channel_attention_as_mlp) {
            gs.push_back({p + "chmlp.w1", {D, D}});
            gs.push_back({p + "chmlp.b1", {D}});
            gs.push_back({p + "chmlp.w2", {D, D}});
            gs.push_back({p + "chmlp.b2", {D}});
        }
        gs.push_back({p + "ffn.w1", {4 * D, D}});
        gs.push_back({p + "ffn.b1", {4 * D}});
        gs.push_back({p + "ffn.w2", {D, 4 * D}});
        gs.push_back({p + "ffn.b2", {D}});
    };
    layer(0);
    for (std::size_t b = 1; b <= c.n_blocks; ++b) {
        if (c.use_pooling) {
            std::string p = "pool" + std::to_string(b) + ".";
            gs.push_back({p + "w", {D, pool_in}});
            gs.push_back({p + "b", {D}});
        }
        layer(b);
    }
    gs.push_back({"head.w1", {D, D}});
    gs.push_back({"head.b1", {D}});
    gs.push_back({"head.w2", {M, D}});
    gs.push_back({"head.b2", {M}});
    return gs;
}

MtmParams MtmParams::init(const ModelConfig& c) {
    MtmParams p;
    p.config = c;
    std::mt19937_64 rng(c.seed);
    std::normal_distribution<double> emb(0.0, 0.02);
    for (const GroupSpec& gs : group_specs(c)) {
        Array a = Array::zeros(gs.shape);
        bool is_emb = gs.name.rfind("embed.", 0) == 0;
        bool is_bias = gs.shape.size() == 1;
        if (is_emb) {
            for (double& x : a.data) x = emb(rng);
        } else if (!is_bias) {
            double bound = 1.0 / std::sqrt(double(gs.shape[1]));
            std::uniform_real_distribution<double> u(-bound, bound);
            for (double& x : a.data) x = u(rng);
        }
        p.groups.push_back({gs.name, std::move(a)});
    }
    return p;
}

const Array& MtmParams::at(const std::string& name) const {
    for (const auto& [n, a] : groups)
        if (n == name) return a;
    throw ConfigError("no parameter group named " + name);
}

bool MtmParams::all_finite() const {
    for (const auto& [n, a] : groups)
        if (!a.all_finite()) return false;
    return true;
}

std::size_t MtmParams::total_size() const {
    std::size_t n = 0;
    for (const auto& [name, a] : groups) n += a.size();
    return n;
}

std::vector<Var> bind_params(diff::Tape& t, const MtmParams& p, bool trainable) {
    std::vector<Var> vs;
    vs.reserve(p.groups.size());
    for (const auto& [name, a] : p.groups) vs.push_back(trainable ? t.input(a) : t.constant(a));
    return vs;
}

double base_unit(const data::DenseView& v) {
    // Only rows carrying at least one observation count; all-false rows are
    // batch padding and must not stretch the unit.
    std::size_t C = v.observed.shape.size() == 2 ? v.observed.shape[1] : 0;
    std::vector<double> real;
    for (std::size_t i = 0; i < v.n_times(); ++i)
        for (std::size_t j = 0; j < C; ++j)
            if (v.observed.at(i * C + j)) {
                real.push_back(v.times[i]);
                break;
            }
    if (real.size() < 2) return 1.0;
    double span = real.back() - real.front();
    return span > 0.0 ? span / double(real.size()) : 1.0;
}

data::DenseView pad_view(const data::DenseView& v, std::size_t t_target) {
    std::size_t T = v.n_times(), C = v.observed.shape[1];
    if (t_target < T) throw ConfigError("cannot pad a view to fewer timepoints");
    if (t_target == T) return v;
    data::DenseView out;
    out.times = v.times;
    double last = out.times.empty() ? 0.0 : out.times.back();
    for (std::size_t k = T; k < t_target; ++k) {
        last += 1.0;
        out.times.push_back(last);
    }
    out.values = Array::zeros({t_target, C});
    std::copy(v.values.data.begin(), v.values.data.end(), out.values.data.begin());
    std::vector<std::uint8_t> bits(t_target * C, 0);
    std::copy(v.observed.bits.begin(), v.observed.bits.end(), bits.begin());
    out.observed = diff::Mask{{t_target, C}, std::move(bits)};
    return out;
}

Var forward_logits(diff::Tape& t, const data::DenseView& view, const std::vector<Var>& vs,
                   const ModelConfig& cfg, bool train, std::mt19937_64* rng,
                   layers::AttnTrace* trace) {
    if (view.observed.shape[1] != cfg.n_channels)
        throw ConfigError("sample channel count does not match the model");
    std::size_t at = 0;
    auto next = [&]() { return vs.at(at++); };

    layers::Context ctx{t, cfg.dropout, train, rng, cfg.heads, trace};
    layers::LayerFlags flags;
    flags.mixing = cfg.use_mixing;
    flags.channel_attention = cfg.use_channel_attention;
    flags.channel_attention_as_mlp = cfg.channel_attention_as_mlp;
    flags.cls_pivotal = cfg.use_cls;
    layers::PoolKind kind = cfg.pooling_kind == "concat" ? layers::PoolKind::Concat
                            : cfg.pooling_kind == "max"  ? layers::PoolKind::Max
                                                         : layers::PoolKind::Avg;

    layers::EmbedVars ev{next(), next()};
    auto layer_vars = [&]() {
        layers::LayerVars lv;
        lv.temporal = {next(), next(), next()};
        if (cfg.use_mixing) lv.mixing = {next(), next(), next()};
        if (cfg.use_channel_attention)
            lv.channel = {next(), next(), next()};
        else if (cfg.channel_attention_as_mlp)
            lv.chmlp = {next(), next(), next(), next()};
        lv.ffn = {next(), next(), next(), next()};
        return lv;
    };

    layers::TokenGrid cur = layers::embed_input(ctx, view, ev);
    cur = layers::token_mixing_layer(ctx, cur, layer_vars(), flags).grid;
    double unit = base_unit(view);
    for (std::size_t b = 1; b <= cfg.n_blocks; ++b) {
        if (cfg.use_pooling) {
            std::size_t R = cfg.ratio_for_block(b - 1);
            layers::PoolVars pv{next(), next()};
            cur = layers::masked_concat_pool(ctx, cur, R, unit, pv, kind);
            unit *= double(R);
        }
        cur = layers::token_mixing_layer(ctx, cur, layer_vars(), flags).grid;
    }

    std::size_t C = cfg.n_channels, D = cfg.d_model;
    Var h;
    if (cfg.use_cls) {
        std::vector<std::size_t> cls(C);
        for (std::size_t j = 0; j < C; ++j) cls[j] = j;
        Var rows = diff::gather_rows(cur.emb, std::move(cls));
        h = diff::masked_max(rows, diff::Mask::full({C, D}), 0);
    } else {
        std::vector<std::size_t> obs;
        for (std::size_t i = 0; i < cur.n_times(); ++i)
            for (std::size_t j = 0; j < C; ++j)
                if (cur.obs(i, j)) obs.push_back(cur.flat(i, j));
        if (obs.empty()) throw DataError("sample has no observed tokens");
        std::size_t n = obs.size();
        Var rows = diff::gather_rows(cur.emb, std::move(obs));
        h = diff::masked_mean(rows, diff::Mask::full({n, D}), 0);
    }
    Var w1 = next(), b1 = next(), w2 = next(), b2 = next();
    if (at != vs.size()) throw ConfigError("parameter group count does not match the config");
    Var hid = diff::relu(diff::linear(h, w1, b1));
    if (train && cfg.dropout > 0.0 && !rng)
        throw ConfigError("dropout in train mode needs an rng");
    static thread_local std::mt19937_64 dummy;
    hid = diff::dropout(hid, cfg.dropout, rng ? *rng : dummy, train);
    return diff::linear(hid, w2, b2);
}

Array predict_logits(const MtmParams& p, const data::DenseView& view, std::mt19937_64* rng,
                     layers::AttnTrace* trace) {
    diff::Tape t;
    std::vector<Var> vs = bind_params(t, p, false);
    Var logits = forward_logits(t, view, vs, p.config, false, rng, trace);
    return logits.value();
}

Var loss_ce(Var logits, std::size_t label, double weight) {
    return diff::softmax_cross_entropy(logits, label, weight);
}

std::vector<double> class_weights(const std::vector<int>& labels, std::size_t n_classes,
                                  bool enabled) {
    std::vector<double> w(n_classes, 1.0);
    if (!enabled || labels.empty()) return w;
    std::vector<std::size_t> count(n_classes, 0);
    for (int l : labels) {
        if (l < 0 || std::size_t(l) >= n_classes) throw DataError("label out of range");
        ++count[std::size_t(l)];
    }
    // Inverse frequency, normalized so the present classes average to 1.
    std::size_t present = 0;
    for (std::size_t c = 0; c < n_classes; ++c) present += count[c] > 0;
    for (std::size_t c = 0; c < n_classes; ++c)
        w[c] = count[c] > 0 ? double(labels.size()) / (double(present) * double(count[c])) : 0.0;
    return w;
}

} // namespace mtm::model
