#pragma once

#include <random>

#include "mtm/data/imts.hpp"
#include "mtm/layers/grid.hpp"

namespace mtm::layers {

// Weights are bound onto the forward tape by the caller; layer functions
// only see Vars. Linear maps use the (out x in) row convention of
// diff::linear, so a D->D attention projection is a D x D Var.
struct EmbedVars {
    diff::Var channel; // C x D
    diff::Var cls;     // C x D
};

struct StageVars {
    diff::Var wq, wk, wv; // D x D
};

struct FfnVars {
    diff::Var w1, b1; // hidden x D, hidden
    diff::Var w2, b2; // D x hidden, D
};

struct LayerFlags {
    bool mixing = true;
    bool channel_attention = true;
    bool channel_attention_as_mlp = false; // only read when channel_attention is false
    bool cls_pivotal = true;               // false: pivotal channel drawn uniformly
};

struct LayerVars {
    StageVars temporal;
    StageVars mixing;  // bound only when flags.mixing
    StageVars channel; // bound only when flags.channel_attention
    FfnVars chmlp;     // bound only when channel_attention_as_mlp
    FfnVars ffn;
};

enum class PoolKind { Concat, Max, Avg };

struct PoolVars {
    diff::Var w; // D x 2D for Concat, D x D otherwise
    diff::Var b; // D
};

// Forward-pass environment shared by every stage of a pass.
struct Context {
    diff::Tape& t;
    double dropout = 0.0;
    bool train = false;
    std::mt19937_64* rng = nullptr; // required when train && dropout > 0
    std::size_t heads = 1;
    AttnTrace* trace = nullptr;
};

// Sinusoidal encoding, one row per time: even columns sin(t * s_k), odd
// columns cos(t * s_k) with s_k = 10000^(-2k/D). t = 0 gives [0,1,0,1,...].
diff::Array positional_encoding(const std::vector<double>& times, std::size_t dim);

// Build the initial grid from one series: observed cells get
// v * channel_emb[j] + PE(t), unobserved cells exact zeros, CLS row from
// cls embeddings.
TokenGrid embed_input(Context& ctx, const data::DenseView& view, const EmbedVars& ev);

// Scaled dot-product self-attention over one gathered sequence. q/k/v are
// n x D; the column split across ctx.heads happens inside. key_scale, when
// given, multiplies pre-softmax score columns (the Eq-style down-weighting
// of filled keys). Returns the output rows and, per head, the post-softmax
// weights as values.
struct AttendOut {
    diff::Var out;
    std::vector<diff::Array> head_weights;
};
AttendOut attend(Context& ctx, diff::Var q, diff::Var k, diff::Var v,
                 const std::vector<double>* key_scale = nullptr);

// Per-channel attention over CLS + that channel's observed tokens.
// cls_weights is T x C: mean over heads of the CLS query's weight on each
// observation token, zero at unobserved cells.
struct TemporalOut {
    TokenGrid grid;
    diff::Array cls_weights;
};
TemporalOut temporal_attention(Context& ctx, const TokenGrid& g, const StageVars& sv);

// Pick each timepoint's pivotal channel: argmax of cls_weights over the
// observed channels (ties to the lowest index), or uniform over observed
// channels when rng is given. Padding rows get pivot -1.
PivotalChoice select_pivotal(const diff::Array& cls_weights, const TokenGrid& g,
                             std::mt19937_64* rng = nullptr);

// Copy-and-fill with the pivotal token, per-channel dense attention where
// scores toward filled keys are divided by the current number of (real)
// timepoints, then filled cells are reset to zeros. observed is unchanged.
TokenGrid token_mixing_attention(Context& ctx, const TokenGrid& g, const PivotalChoice& pc,
                                 const StageVars& sv);

// Per-timepoint attention across observed channels; the CLS row attends
// across all C CLS tokens.
TokenGrid channel_attention(Context& ctx, const TokenGrid& g, const StageVars& sv);

// Residual position-wise feed-forward on present cells (pre-norm, ReLU,
// dropout on the hidden activations).
TokenGrid ffn_block(Context& ctx, const TokenGrid& g, const FfnVars& fv);

// One full layer: temporal attention, optional token mixing, optional
// channel attention (or its per-token MLP stand-in), closing feed-forward.
// Every stage is a pre-norm residual update.
struct LayerOut {
    TokenGrid grid;
    diff::Array cls_weights;
};
LayerOut token_mixing_layer(Context& ctx, const TokenGrid& g, const LayerVars& lv,
                            const LayerFlags& flags);

// Collapse timepoints into windows [p*R*u, (p+1)*R*u) anchored at 0. Each
// non-empty (window, channel) cell pools its observed tokens (max, mean, or
// both concatenated) and is projected back to width D. Window centers become
// the new times; empty windows vanish; CLS rows pass through.
TokenGrid masked_concat_pool(Context& ctx, const TokenGrid& g, std::size_t ratio, double unit,
                             const PoolVars& pv, PoolKind kind = PoolKind::Concat);

} // namespace mtm::layers
