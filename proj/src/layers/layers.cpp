#include "mtm/layers/layers.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "mtm/errors.hpp"

namespace mtm::layers {

using diff::Array;
using diff::Mask;
using diff::Var;

std::vector<std::size_t> TokenGrid::real_timepoints() const {
    std::vector<std::size_t> out;
    std::size_t C = n_channels();
    for (std::size_t i = 0; i < n_times(); ++i)
        for (std::size_t j = 0; j < C; ++j)
            if (observed.bits[(i + 1) * C + j]) {
                out.push_back(i);
                break;
            }
    return out;
}

namespace {

std::mt19937_64& rng_of(Context& ctx) {
    static thread_local std::mt19937_64 dummy;
    if (ctx.train && ctx.dropout > 0.0) {
        if (!ctx.rng) throw ConfigError("dropout in train mode needs an rng");
        return *ctx.rng;
    }
    return ctx.rng ? *ctx.rng : dummy;
}

// Place per-sequence output rows back into grid layout; rows not covered by
// any sequence come out as exact zeros.
Var scatter_to_grid(diff::Tape& t, std::vector<Var> parts,
                    const std::vector<std::vector<std::size_t>>& rows_of, std::size_t n_rows,
                    std::size_t dim) {
    std::vector<std::size_t> map(n_rows, 0);
    std::vector<char> hit(n_rows, 0);
    std::size_t off = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        for (std::size_t r = 0; r < rows_of[p].size(); ++r) {
            map[rows_of[p][r]] = off + r;
            hit[rows_of[p][r]] = 1;
        }
        off += parts[p].rows();
    }
    parts.push_back(t.constant(Array::zeros({1, dim})));
    for (std::size_t r = 0; r < n_rows; ++r)
        if (!hit[r]) map[r] = off;
    return diff::gather_rows(diff::concat_rows(parts), std::move(map));
}

struct Qkv {
    Var q, k, v;
};

Qkv project_qkv(const Var& x, const StageVars& sv) {
    Var ln = diff::layer_norm_rows(x);
    return {diff::matmul_nt(ln, sv.wq), diff::matmul_nt(ln, sv.wk), diff::matmul_nt(ln, sv.wv)};
}

} // namespace

Array positional_encoding(const std::vector<double>& times, std::size_t dim) {
    if (dim == 0 || dim % 2 != 0) throw ConfigError("positional encoding needs an even width");
    Array pe = Array::zeros({times.size(), dim});
    for (std::size_t i = 0; i < times.size(); ++i)
        for (std::size_t k = 0; k < dim / 2; ++k) {
            double f = std::pow(10000.0, -double(2 * k) / double(dim));
            pe.data[i * dim + 2 * k] = std::sin(times[i] * f);
            pe.data[i * dim + 2 * k + 1] = std::cos(times[i] * f);
        }
    return pe;
}

TokenGrid embed_input(Context& ctx, const data::DenseView& view, const EmbedVars& ev) {
    std::size_t T = view.n_times();
    std::size_t C = view.observed.shape[1];
    std::size_t D = ev.channel.cols();
    if (ev.channel.rows() != C || ev.cls.rows() != C || ev.cls.cols() != D)
        throw ShapeError("embedding tables do not match the series' channel count");

    Array pe = positional_encoding(view.times, D);
    std::vector<std::size_t> chan(T * C);
    std::vector<double> val(T * C);
    Array pe_cells = Array::zeros({T * C, D});
    for (std::size_t i = 0; i < T; ++i)
        for (std::size_t j = 0; j < C; ++j) {
            std::size_t s = i * C + j;
            chan[s] = j;
            if (view.observed.bits[s]) {
                val[s] = view.values.data[s];
                std::copy_n(pe.data.begin() + i * D, D, pe_cells.data.begin() + s * D);
            }
        }
    Var cells = diff::scale_rows(diff::gather_rows(ev.channel, std::move(chan)), std::move(val));
    cells = diff::add(cells, ctx.t.constant(std::move(pe_cells)));

    std::vector<std::uint8_t> bits((T + 1) * C, 1);
    std::copy(view.observed.bits.begin(), view.observed.bits.end(), bits.begin() + C);
    return {diff::concat_rows({ev.cls, cells}), Mask{{T + 1, C}, std::move(bits)}, view.times};
}

AttendOut attend(Context& ctx, Var q, Var k, Var v, const std::vector<double>* key_scale) {
    std::size_t n = q.rows();
    std::size_t m = k.rows();
    std::size_t dim = q.cols();
    if (ctx.heads == 0 || dim % ctx.heads != 0)
        throw ConfigError("attention width must divide evenly across heads");
    std::size_t hd = dim / ctx.heads;
    double sc = 1.0 / std::sqrt(double(hd));

    AttendOut out;
    std::vector<Var> head_outs;
    for (std::size_t h = 0; h < ctx.heads; ++h) {
        Var qh = ctx.heads == 1 ? q : diff::slice_cols(q, h * hd, (h + 1) * hd);
        Var kh = ctx.heads == 1 ? k : diff::slice_cols(k, h * hd, (h + 1) * hd);
        Var vh = ctx.heads == 1 ? v : diff::slice_cols(v, h * hd, (h + 1) * hd);
        Var scores = diff::scale(diff::matmul_nt(qh, kh), sc);
        if (key_scale) scores = diff::scale_cols(scores, *key_scale);
        Var w = diff::masked_softmax(scores, Mask::full({n, m}), 1);
        out.head_weights.push_back(w.value());
        Var wd = diff::dropout(w, ctx.dropout, rng_of(ctx), ctx.train);
        head_outs.push_back(diff::matmul(wd, vh));
    }
    out.out = head_outs[0];
    for (std::size_t h = 1; h < head_outs.size(); ++h)
        out.out = diff::concat_cols(out.out, head_outs[h]);
    return out;
}

TemporalOut temporal_attention(Context& ctx, const TokenGrid& g, const StageVars& sv) {
    std::size_t T = g.n_times(), C = g.n_channels(), D = g.width();
    Qkv p = project_qkv(g.emb, sv);

    Array cls_w = Array::zeros({T, C});
    std::vector<Var> parts;
    std::vector<std::vector<std::size_t>> rows_of;
    StageTrace st{"temporal", {}};
    for (std::size_t j = 0; j < C; ++j) {
        std::vector<std::size_t> rows{j};
        for (std::size_t i = 0; i < T; ++i)
            if (g.obs(i, j)) rows.push_back(g.flat(i, j));
        AttendOut ao = attend(ctx, diff::gather_rows(p.q, rows), diff::gather_rows(p.k, rows),
                              diff::gather_rows(p.v, rows));
        for (std::size_t pos = 1; pos < rows.size(); ++pos) {
            double acc = 0;
            for (const Array& hw : ao.head_weights) acc += hw.data[pos];
            cls_w.data[(rows[pos] / C - 1) * C + j] = acc / double(ao.head_weights.size());
        }
        if (ctx.trace) st.seqs.push_back({j, rows, ao.head_weights});
        parts.push_back(ao.out);
        rows_of.push_back(std::move(rows));
    }
    Var att = scatter_to_grid(ctx.t, std::move(parts), rows_of, (T + 1) * C, D);
    if (ctx.trace) {
        ctx.trace->stages.push_back(std::move(st));
        ctx.trace->cls_weights.push_back(cls_w);
    }
    return {TokenGrid{diff::add(g.emb, att), g.observed, g.times}, cls_w};
}

PivotalChoice select_pivotal(const Array& cls_weights, const TokenGrid& g, std::mt19937_64* rng) {
    std::size_t T = g.n_times(), C = g.n_channels();
    if (cls_weights.shape != diff::Shape{T, C})
        throw ShapeError("pivotal selection got weights of the wrong shape");
    PivotalChoice pc{std::vector<int>(T, -1), std::vector<std::uint8_t>(T * C, 0)};
    for (std::size_t i = 0; i < T; ++i) {
        std::vector<std::size_t> obs;
        for (std::size_t j = 0; j < C; ++j)
            if (g.obs(i, j)) obs.push_back(j);
        if (obs.empty()) continue; // padding row
        std::size_t pick = obs[0];
        if (rng) {
            pick = obs[std::uniform_int_distribution<std::size_t>(0, obs.size() - 1)(*rng)];
        } else {
            for (std::size_t j : obs)
                if (cls_weights.data[i * C + j] > cls_weights.data[i * C + pick]) pick = j;
        }
        pc.pivot[i] = int(pick);
        for (std::size_t j = 0; j < C; ++j)
            if (!g.obs(i, j)) pc.filled[i * C + j] = 1;
    }
    return pc;
}

TokenGrid token_mixing_attention(Context& ctx, const TokenGrid& g, const PivotalChoice& pc,
                                 const StageVars& sv) {
    std::size_t T = g.n_times(), C = g.n_channels(), D = g.width();
    if (pc.pivot.size() != T || pc.filled.size() != T * C)
        throw ShapeError("pivotal choice does not match the grid");

    std::vector<std::size_t> fill((T + 1) * C);
    for (std::size_t r = 0; r < C; ++r) fill[r] = r;
    for (std::size_t i = 0; i < T; ++i)
        for (std::size_t j = 0; j < C; ++j) {
            std::size_t r = g.flat(i, j);
            bool copy = pc.filled[i * C + j] && pc.pivot[i] >= 0;
            fill[r] = copy ? g.flat(i, std::size_t(pc.pivot[i])) : r;
        }
    Var filled = diff::gather_rows(g.emb, std::move(fill));
    Qkv p = project_qkv(filled, sv);

    std::vector<std::size_t> real = g.real_timepoints();
    double inv_t = real.empty() ? 1.0 : 1.0 / double(real.size());
    std::vector<Var> parts;
    std::vector<std::vector<std::size_t>> rows_of;
    StageTrace st{"mixing", {}};
    for (std::size_t j = 0; j < C; ++j) {
        std::vector<std::size_t> rows{j};
        std::vector<double> key_scale{1.0};
        for (std::size_t i : real) {
            rows.push_back(g.flat(i, j));
            key_scale.push_back(pc.filled[i * C + j] ? inv_t : 1.0);
        }
        AttendOut ao = attend(ctx, diff::gather_rows(p.q, rows), diff::gather_rows(p.k, rows),
                              diff::gather_rows(p.v, rows), &key_scale);
        if (ctx.trace) st.seqs.push_back({j, rows, ao.head_weights});
        parts.push_back(ao.out);
        rows_of.push_back(std::move(rows));
    }
    Var att = scatter_to_grid(ctx.t, std::move(parts), rows_of, (T + 1) * C, D);
    Var mid = diff::add(filled, att);

    // Reset: cells the pivotal copy filled go back to exact zeros; observed
    // cells and the mask itself pass through untouched.
    std::vector<double> keep((T + 1) * C, 1.0);
    for (std::size_t i = 0; i < T; ++i)
        for (std::size_t j = 0; j < C; ++j)
            if (pc.filled[i * C + j]) keep[g.flat(i, j)] = 0.0;
    Var out = diff::scale_rows(mid, std::move(keep));
    if (ctx.trace) {
        ctx.trace->stages.push_back(std::move(st));
        ctx.trace->pivots.push_back(pc.pivot);
        ctx.trace->filled.push_back(pc.filled);
    }
    return {out, g.observed, g.times};
}

TokenGrid channel_attention(Context& ctx, const TokenGrid& g, const StageVars& sv) {
    std::size_t T = g.n_times(), C = g.n_channels(), D = g.width();
    Qkv p = project_qkv(g.emb, sv);

    std::vector<Var> parts;
    std::vector<std::vector<std::size_t>> rows_of;
    StageTrace st{"channel", {}};
    auto run = [&](std::size_t seq_id, std::vector<std::size_t> rows) {
        AttendOut ao = attend(ctx, diff::gather_rows(p.q, rows), diff::gather_rows(p.k, rows),
                              diff::gather_rows(p.v, rows));
        if (ctx.trace) st.seqs.push_back({seq_id, rows, ao.head_weights});
        parts.push_back(ao.out);
        rows_of.push_back(std::move(rows));
    };

    std::vector<std::size_t> cls_rows(C);
    for (std::size_t j = 0; j < C; ++j) cls_rows[j] = j;
    run(0, std::move(cls_rows));
    for (std::size_t i = 0; i < T; ++i) {
        std::vector<std::size_t> rows;
        for (std::size_t j = 0; j < C; ++j)
            if (g.obs(i, j)) rows.push_back(g.flat(i, j));
        if (rows.empty()) continue; // padding row
        run(i + 1, std::move(rows));
    }
    Var att = scatter_to_grid(ctx.t, std::move(parts), rows_of, (T + 1) * C, D);
    if (ctx.trace) ctx.trace->stages.push_back(std::move(st));
    return {diff::add(g.emb, att), g.observed, g.times};
}

TokenGrid ffn_block(Context& ctx, const TokenGrid& g, const FfnVars& fv) {
    std::size_t T = g.n_times(), C = g.n_channels(), D = g.width();
    std::vector<std::size_t> rows(C);
    for (std::size_t j = 0; j < C; ++j) rows[j] = j;
    for (std::size_t i = 0; i < T; ++i)
        for (std::size_t j = 0; j < C; ++j)
            if (g.obs(i, j)) rows.push_back(g.flat(i, j));

    Var x = diff::gather_rows(g.emb, rows);
    Var h = diff::relu(diff::linear(diff::layer_norm_rows(x), fv.w1, fv.b1));
    h = diff::dropout(h, ctx.dropout, rng_of(ctx), ctx.train);
    Var y = diff::linear(h, fv.w2, fv.b2);
    Var att = scatter_to_grid(ctx.t, {y}, {rows}, (T + 1) * C, D);
    return {diff::add(g.emb, att), g.observed, g.times};
}

LayerOut token_mixing_layer(Context& ctx, const TokenGrid& g, const LayerVars& lv,
                            const LayerFlags& flags) {
    if (ctx.trace) {
        ctx.trace->layer_observed.push_back(g.observed);
        ctx.trace->layer_times.push_back(g.times);
    }
    TemporalOut to = temporal_attention(ctx, g, lv.temporal);
    TokenGrid cur = to.grid;
    if (flags.mixing) {
        if (!flags.cls_pivotal && !ctx.rng)
            throw ConfigError("random pivotal selection needs an rng");
        PivotalChoice pc =
            select_pivotal(to.cls_weights, cur, flags.cls_pivotal ? nullptr : ctx.rng);
        cur = token_mixing_attention(ctx, cur, pc, lv.mixing);
    }
    if (flags.channel_attention)
        cur = channel_attention(ctx, cur, lv.channel);
    else if (flags.channel_attention_as_mlp)
        cur = ffn_block(ctx, cur, lv.chmlp);
    cur = ffn_block(ctx, cur, lv.ffn);
    return {cur, to.cls_weights};
}

TokenGrid masked_concat_pool(Context& ctx, const TokenGrid& g, std::size_t ratio, double unit,
                             const PoolVars& pv, PoolKind kind) {
    if (ratio < 1) throw ConfigError("pooling ratio must be at least 1");
    if (!(unit > 0.0) || !std::isfinite(unit)) throw ConfigError("pooling unit must be positive");
    std::size_t C = g.n_channels(), D = g.width();
    double width = double(ratio) * unit;

    std::map<long long, std::vector<std::size_t>> windows;
    for (std::size_t i : g.real_timepoints())
        windows[(long long)std::floor(g.times[i] / width)].push_back(i);

    std::size_t Tn = windows.size();
    std::vector<double> new_times;
    new_times.reserve(Tn);
    Mask new_obs{{Tn + 1, C}, std::vector<std::uint8_t>((Tn + 1) * C, 0)};
    std::fill_n(new_obs.bits.begin(), C, 1);

    std::vector<Var> pooled;
    std::vector<std::size_t> slot_rows;
    std::size_t w = 0;
    for (const auto& [p, idxs] : windows) {
        new_times.push_back((double(p) + 0.5) * width);
        for (std::size_t j = 0; j < C; ++j) {
            std::vector<std::size_t> rows;
            for (std::size_t i : idxs)
                if (g.obs(i, j)) rows.push_back(g.flat(i, j));
            if (rows.empty()) continue;
            Mask full = Mask::full({rows.size(), D});
            Var m = diff::gather_rows(g.emb, std::move(rows));
            Var cell;
            switch (kind) {
            case PoolKind::Concat:
                cell = diff::concat_cols(diff::masked_max(m, full, 0), diff::masked_mean(m, full, 0));
                break;
            case PoolKind::Max: cell = diff::masked_max(m, full, 0); break;
            case PoolKind::Avg: cell = diff::masked_mean(m, full, 0); break;
            }
            pooled.push_back(cell);
            slot_rows.push_back((w + 1) * C + j);
            new_obs.bits[(w + 1) * C + j] = 1;
        }
        ++w;
    }

    std::vector<std::size_t> cls_rows(C);
    for (std::size_t j = 0; j < C; ++j) cls_rows[j] = j;
    Var cls = diff::gather_rows(g.emb, std::move(cls_rows));

    std::vector<Var> parts{cls};
    std::vector<std::vector<std::size_t>> rows_of{{}};
    rows_of[0].resize(C);
    for (std::size_t j = 0; j < C; ++j) rows_of[0][j] = j;
    if (!pooled.empty()) {
        Var proj = diff::linear(diff::concat_rows(pooled), pv.w, pv.b);
        parts.push_back(proj);
        rows_of.push_back(std::move(slot_rows));
    }
    Var emb = scatter_to_grid(ctx.t, std::move(parts), rows_of, (Tn + 1) * C, D);
    return {emb, std::move(new_obs), std::move(new_times)};
}

} // namespace mtm::layers
