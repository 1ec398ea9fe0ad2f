#pragma once

#include <functional>

#include "mtm/data/transform.hpp"
#include "mtm/metrics/metrics.hpp"
#include "mtm/model/checkpoint.hpp"

namespace mtm::model {

struct EpochStats {
    std::size_t epoch = 0; // 1-based
    double train_loss = 0.0;
    double val_metric = 0.0; // AUPRC for binary tasks, macro F1 otherwise
    metrics::MetricsReport val_report;
};

struct TrainResult {
    Checkpoint checkpoint; // parameters from the best validation epoch
    std::vector<EpochStats> history;
};

struct TrainOptions {
    std::function<void(const EpochStats&)> on_epoch; // progress hook, may be empty
};

// Fit on splits.train with Adam, select the epoch with the best validation
// metric, and return that checkpoint plus the per-epoch history. Channel
// count and class count are taken from the data unless the config pins them.
// Aborts with NumericError if the loss or parameters go non-finite.
TrainResult train(const data::Splits& splits, ModelConfig config, const TrainOptions& opts = {});

// Eval-mode metrics over a dataset; optionally surfaces per-sample argmax
// predictions and positive-class scores (binary only).
metrics::MetricsReport evaluate(const Checkpoint& ck, const std::vector<data::EventSeries>& ds,
                                std::vector<int>* preds_out = nullptr,
                                std::vector<double>* scores_out = nullptr);

} // namespace mtm::model
