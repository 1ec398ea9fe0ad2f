#pragma once

#include <cstdint>
#include <vector>

#include "mtm/data/imts.hpp"

namespace mtm::data {

struct NormStats {
    std::vector<double> mean;
    std::vector<double> std_dev; // floored at 1e-8
};

// Per-channel statistics over every event value in `train`.
NormStats fit_stats(const std::vector<EventSeries>& train);
// v' = (v - mean_c) / std_c, in place.
void apply_stats(std::vector<EventSeries>& dataset, const NormStats& stats);

void save_stats(const std::string& path, const NormStats& stats);
NormStats load_stats(const std::string& path);

// Empties a uniformly chosen floor(ratio * C)-subset of channels per sample.
// Samples left with no events are dropped with a warning. Deterministic
// under (seed, dataset order).
std::vector<EventSeries> mask_channels(const std::vector<EventSeries>& dataset, double ratio,
                                       std::uint64_t seed);

struct SplitSpec {
    int subset_id = 1; // 1..5
    double train_frac = 0.8;
    double val_frac = 0.1;
    double test_frac = 0.1;
    std::uint64_t seed = 0;
};

struct Splits {
    std::vector<EventSeries> train, val, test;
};

// Disjoint cover, stratified by label; a class with fewer than 3 samples
// triggers a warning and an unstratified split.
Splits split(const std::vector<EventSeries>& dataset, const SplitSpec& spec);

} // namespace mtm::data
