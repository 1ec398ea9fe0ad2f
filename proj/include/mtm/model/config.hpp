#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace mtm::model {

// Architecture and training knobs. n_channels/n_classes are data-derived;
// zero means "fill in from the dataset at training time".
struct ModelConfig {
    std::size_t d_model = 16;
    std::size_t n_blocks = 2;
    std::vector<std::size_t> pool_ratio = {3}; // global (size 1) or one per block
    std::size_t heads = 1;
    double dropout = 0.0;
    double lr = 1e-3;
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;

    bool use_pooling = true;
    bool use_cls = true;
    bool use_mixing = true;
    bool use_channel_attention = true;
    bool channel_attention_as_mlp = false;

    std::string pooling_kind = "concat"; // concat | max | avg
    bool class_weighting = false;

    std::size_t n_channels = 0;
    std::size_t n_classes = 0;

    std::size_t ratio_for_block(std::size_t b) const {
        return pool_ratio.size() == 1 ? pool_ratio[0] : pool_ratio[b];
    }

    // Throws ConfigError on any out-of-range field or flag combination.
    void validate() const;
};

// Strict readers: unknown keys and wrong types are config errors.
ModelConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ModelConfig& c);

// Stable content hash of the canonical JSON form, for tagging reports.
std::string config_hash(const ModelConfig& c);

} // namespace mtm::model
