#pragma once

#include <string>

#include "mtm/data/transform.hpp"
#include "mtm/model/model.hpp"

namespace mtm::model {

// Everything needed to reload a trained model: config, parameters, the
// normalization fitted on the training split, the epoch the parameters were
// selected at, and the optimizer RNG state at the end of training.
struct Checkpoint {
    MtmParams params;
    data::NormStats stats;
    std::size_t epoch = 0;
    std::string rng_state;
};

// Single JSON document; parameters travel as a base-64 blob of raw
// little-endian 64-bit floats in group order, so save -> load -> save is
// byte-identical.
std::string checkpoint_to_json(const Checkpoint& ck);
Checkpoint checkpoint_from_json(const std::string& text);

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

} // namespace mtm::model
