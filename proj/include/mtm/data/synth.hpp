#pragma once

#include <cstdint>
#include <vector>

#include "mtm/data/imts.hpp"

namespace mtm::data {

// Latent signal g(t) = sin(2*pi*f*t + phi); channel j observes
// a_j * g(t) + noise at its own timepoints. The label counts channels whose
// amplitude sign disagrees with channel 0, modulo `classes`, so any single
// channel is uninformative and cross-channel comparison is required.
// `alpha` interpolates between fully shared timepoints (0) and fully
// disjoint per-channel timepoints (1): each event keeps its shared slot
// with probability 1 - alpha, otherwise draws a fresh uniform time.
struct SynthSpec {
    int n_samples = 100;
    int n_channels = 2;
    int classes = 2;
    int events_per_channel = 12;
    double alpha = 0.0;
    double f_min = 1.0;
    double f_max = 3.0;
    double noise_sd = 0.1;
    double duration = 1.0;
    std::uint64_t seed = 0;
};

// `signs_out`, when given, receives each sample's true amplitude signs so a
// test can run the oracle classifier against the generated labels.
std::vector<EventSeries> synth_generate(const SynthSpec& spec,
                                        std::vector<std::vector<int>>* signs_out = nullptr);

// Recomputes each label from the true amplitude signs; by construction it
// matches synth_generate's labels exactly.
int synth_oracle_label(const std::vector<int>& signs, int classes);

} // namespace mtm::data
