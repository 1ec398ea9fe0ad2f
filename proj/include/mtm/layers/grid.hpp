#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtm/diff/ops.hpp"

namespace mtm::layers {

// Token grid on a tape. emb holds (T+1)*C rows of width D: row 0..C-1 are
// the per-channel CLS tokens, then timepoint i channel j lives at flat row
// (i+1)*C + j. observed mirrors that layout ((T+1) x C bits, row 0 all
// true). Rows whose timepoint has no observed channel at all are batch
// padding: they hold zeros and take part in nothing.
struct TokenGrid {
    diff::Var emb;
    diff::Mask observed; // (T+1) x C
    std::vector<double> times;

    std::size_t n_times() const { return times.size(); }
    std::size_t n_channels() const { return observed.shape[1]; }
    std::size_t width() const { return emb.cols(); }

    bool obs(std::size_t i, std::size_t j) const { // i indexes timepoints, 0-based
        return observed.bits[(i + 1) * n_channels() + j] != 0;
    }
    std::size_t flat(std::size_t i, std::size_t j) const { return (i + 1) * n_channels() + j; }

    // Timepoints with at least one observed channel (excludes padding).
    std::vector<std::size_t> real_timepoints() const;
};

// Outcome of pivotal selection. pivot[i] is the chosen channel of timepoint
// i, or -1 for padding rows. filled marks the (timepoint, channel) cells a
// pivotal copy will fill; it is true only where observed is false.
struct PivotalChoice {
    std::vector<int> pivot;
    std::vector<std::uint8_t> filled; // T x C
};

// Attention weights captured during a forward pass, for inspection dumps
// and invariant tests.
struct SeqTrace {
    std::size_t seq;                      // channel (temporal/mixing) or timepoint (channel stage)
    std::vector<std::size_t> rows;        // grid rows attending, in order
    std::vector<diff::Array> head_weights; // post-softmax, one matrix per head
};

struct StageTrace {
    std::string stage; // "temporal" | "mixing" | "channel"
    std::vector<SeqTrace> seqs;
};

struct AttnTrace {
    std::vector<StageTrace> stages;
    std::vector<diff::Array> cls_weights;           // per layer, T x C
    std::vector<std::vector<int>> pivots;           // per mixing stage
    std::vector<std::vector<std::uint8_t>> filled;  // per mixing stage, T x C
    std::vector<diff::Mask> layer_observed;         // grid mask at each layer's entry
    std::vector<std::vector<double>> layer_times;   // timepoints at each layer's entry
};

} // namespace mtm::layers
