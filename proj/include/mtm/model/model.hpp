#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mtm/data/imts.hpp"
#include "mtm/layers/layers.hpp"
#include "mtm/model/config.hpp"

namespace mtm::model {

// One named parameter group (a weight matrix, bias or embedding table).
struct GroupSpec {
    std::string name;
    diff::Shape shape;
};

// The full group layout for a config, in the order the forward pass binds
// them. Requires n_channels and n_classes to be set.
std::vector<GroupSpec> group_specs(const ModelConfig& c);

// All trainable state, as named arrays in group_specs order.
struct MtmParams {
    ModelConfig config;
    std::vector<std::pair<std::string, diff::Array>> groups;

    static MtmParams init(const ModelConfig& c);

    const diff::Array& at(const std::string& name) const;
    bool all_finite() const;
    std::size_t total_size() const;
};

// Bind every group onto a tape, as inputs (gradients tracked) or constants.
std::vector<diff::Var> bind_params(diff::Tape& t, const MtmParams& p, bool trainable);

// Forward pass over one (possibly padded) series view. `vs` are the bound
// groups in group_specs order. Returns 1 x M logits. rng drives dropout in
// train mode and pivotal selection when the config disables CLS guidance.
diff::Var forward_logits(diff::Tape& t, const data::DenseView& view,
                         const std::vector<diff::Var>& vs, const ModelConfig& cfg, bool train,
                         std::mt19937_64* rng = nullptr, layers::AttnTrace* trace = nullptr);

// Eval-mode logits with params bound as constants on a private tape.
diff::Array predict_logits(const MtmParams& p, const data::DenseView& view,
                           std::mt19937_64* rng = nullptr, layers::AttnTrace* trace = nullptr);

// Cross-entropy against the label; weight 1 unless class weighting applies.
diff::Var loss_ce(diff::Var logits, std::size_t label, double weight = 1.0);

// Inverse-frequency class weights normalized to mean 1; all ones when off.
std::vector<double> class_weights(const std::vector<int>& labels, std::size_t n_classes,
                                  bool enabled);

// Pad a view to `t_target` rows by appending unobserved timepoints; padding
// never influences logits.
data::DenseView pad_view(const data::DenseView& v, std::size_t t_target);

// Window base unit: mean spacing (time span over count), 1.0 for a single
// timepoint.
double base_unit(const data::DenseView& v);

} // namespace mtm::model
