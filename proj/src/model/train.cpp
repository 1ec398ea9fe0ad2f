#include "mtm/model/train.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mtm/errors.hpp"

namespace mtm::model {

using diff::Array;
using diff::Var;

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void derive_dims(const data::Splits& splits, ModelConfig& cfg) {
    std::size_t C = 0;
    int max_label = -1;
    for (const auto* part : {&splits.train, &splits.val, &splits.test})
        for (const data::EventSeries& s : *part) {
            if (C == 0) C = std::size_t(s.n_channels);
            if (std::size_t(s.n_channels) != C)
                throw DataError("series disagree on channel count");
            if (s.label < 0) throw DataError("series " + s.id + " has no label");
            max_label = std::max(max_label, s.label);
        }
    if (C == 0) throw DataError("no samples to train on");
    if (cfg.n_channels == 0) cfg.n_channels = C;
    if (cfg.n_channels != C)
        throw ConfigError("config expects " + std::to_string(cfg.n_channels) +
                          " channels, data has " + std::to_string(C));
    std::size_t M = std::size_t(max_label) + 1;
    if (M < 2) M = 2;
    if (cfg.n_classes == 0) cfg.n_classes = M;
    if (cfg.n_classes < M)
        throw ConfigError("data holds labels beyond the configured n_classes");
}

std::vector<data::DenseView> make_views(const std::vector<data::EventSeries>& part,
                                        const data::NormStats& stats) {
    std::vector<data::EventSeries> scaled = part;
    data::apply_stats(scaled, stats);
    std::vector<data::DenseView> views;
    views.reserve(scaled.size());
    for (const data::EventSeries& s : scaled) views.push_back(data::to_dense(s));
    return views;
}

double positive_score(const Array& logits) {
    double l0 = logits.data[0], l1 = logits.data[1];
    double m = std::max(l0, l1);
    double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
    return e1 / (e0 + e1);
}

int argmax_label(const Array& logits) {
    int best = 0;
    for (std::size_t k = 1; k < logits.size(); ++k)
        if (logits.data[k] > logits.data[best]) best = int(k);
    return best;
}

metrics::MetricsReport eval_views(const MtmParams& p, const std::vector<data::DenseView>& views,
                                  const std::vector<int>& labels, std::vector<int>* preds_out,
                                  std::vector<double>* scores_out) {
    const ModelConfig& cfg = p.config;
    std::vector<int> preds;
    std::vector<double> scores;
    preds.reserve(views.size());
    for (std::size_t i = 0; i < views.size(); ++i) {
        std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ull + i);
        Array logits = predict_logits(p, views[i], &rng);
        preds.push_back(argmax_label(logits));
        if (cfg.n_classes == 2) scores.push_back(positive_score(logits));
    }
    metrics::MetricsReport rep = metrics::build_report(preds, labels, scores, cfg.n_classes);
    rep.config_hash = config_hash(cfg);
    rep.seed = cfg.seed;
    if (preds_out) *preds_out = std::move(preds);
    if (scores_out) *scores_out = std::move(scores);
    return rep;
}

std::string rng_state_string(const std::mt19937_64& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

} // namespace

TrainResult train(const data::Splits& splits, ModelConfig cfg, const TrainOptions& opts) {
    if (splits.train.empty()) throw DataError("training split is empty");
    derive_dims(splits, cfg);
    cfg.validate();

    data::NormStats stats = data::fit_stats(splits.train);
    std::vector<data::DenseView> train_views = make_views(splits.train, stats);
    std::vector<data::DenseView> val_views = make_views(splits.val, stats);
    std::vector<int> train_labels, val_labels;
    for (const auto& s : splits.train) train_labels.push_back(s.label);
    for (const auto& s : splits.val) val_labels.push_back(s.label);
    std::vector<double> cw = class_weights(train_labels, cfg.n_classes, cfg.class_weighting);

    MtmParams params = MtmParams::init(cfg);
    std::size_t n_groups = params.groups.size();
    std::vector<std::vector<double>> m(n_groups), v(n_groups), acc(n_groups);
    for (std::size_t g = 0; g < n_groups; ++g) {
        m[g].assign(params.groups[g].second.size(), 0.0);
        v[g].assign(params.groups[g].second.size(), 0.0);
        acc[g].assign(params.groups[g].second.size(), 0.0);
    }

    std::mt19937_64 rng(cfg.seed);
    MtmParams best = params;
    double best_metric = -1.0;
    std::size_t best_epoch = 0;
    std::vector<EpochStats> history;
    std::size_t step = 0;

    std::vector<std::size_t> order(train_views.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t loss_n = 0;

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            std::size_t t_max = 0;
            for (std::size_t b = start; b < stop; ++b)
                t_max = std::max(t_max, train_views[order[b]].n_times());
            for (auto& a : acc) std::fill(a.begin(), a.end(), 0.0);

            for (std::size_t b = start; b < stop; ++b) {
                std::size_t idx = order[b];
                data::DenseView padded = pad_view(train_views[idx], t_max);
                diff::Tape tape;
                std::vector<Var> vs = bind_params(tape, params, true);
                Var logits = forward_logits(tape, padded, vs, cfg, true, &rng);
                std::size_t label = std::size_t(train_labels[idx]);
                Var loss = loss_ce(logits, label, cw[label]);
                double lv = loss.value().data[0];
                if (!std::isfinite(lv))
                    throw NumericError("training diverged: non-finite loss at epoch " +
                                       std::to_string(epoch) + ", sample " + splits.train[idx].id);
                tape.backward(loss);
                for (std::size_t g = 0; g < n_groups; ++g) {
                    Array grad = tape.grad_of(vs[g]);
                    for (std::size_t k = 0; k < grad.size(); ++k) acc[g][k] += grad.data[k];
                }
                loss_sum += lv;
                ++loss_n;
            }

            ++step;
            double inv_n = 1.0 / double(stop - start);
            double c1 = 1.0 - std::pow(kBeta1, double(step));
            double c2 = 1.0 - std::pow(kBeta2, double(step));
            for (std::size_t g = 0; g < n_groups; ++g) {
                std::vector<double>& w = params.groups[g].second.data;
                for (std::size_t k = 0; k < w.size(); ++k) {
                    double grad = acc[g][k] * inv_n;
                    m[g][k] = kBeta1 * m[g][k] + (1.0 - kBeta1) * grad;
                    v[g][k] = kBeta2 * v[g][k] + (1.0 - kBeta2) * grad * grad;
                    w[k] -= cfg.lr * (m[g][k] / c1) / (std::sqrt(v[g][k] / c2) + kAdamEps);
                }
            }
            if (!params.all_finite())
                throw NumericError("training diverged: non-finite parameters after epoch " +
                                   std::to_string(epoch) + ", step " + std::to_string(step));
        }

        EpochStats es;
        es.epoch = epoch;
        es.train_loss = loss_n ? loss_sum / double(loss_n) : 0.0;
        if (!val_views.empty()) {
            es.val_report = eval_views(params, val_views, val_labels, nullptr, nullptr);
            es.val_metric =
                cfg.n_classes == 2 ? es.val_report.auprc : es.val_report.macro_f1;
            if (es.val_metric > best_metric) {
                best_metric = es.val_metric;
                best = params;
                best_epoch = epoch;
            }
        } else {
            best = params;
            best_epoch = epoch;
        }
        history.push_back(es);
        if (opts.on_epoch) opts.on_epoch(history.back());
    }

    Checkpoint ck;
    ck.params = std::move(best);
    ck.stats = std::move(stats);
    ck.epoch = best_epoch;
    ck.rng_state = rng_state_string(rng);
    return {std::move(ck), std::move(history)};
}

metrics::MetricsReport evaluate(const Checkpoint& ck, const std::vector<data::EventSeries>& ds,
                                std::vector<int>* preds_out, std::vector<double>* scores_out) {
    const ModelConfig& cfg = ck.params.config;
    if (ds.empty()) throw DataError("nothing to evaluate");
    std::vector<int> labels;
    for (const data::EventSeries& s : ds) {
        if (std::size_t(s.n_channels) != cfg.n_channels)
            throw ConfigError("dataset has " + std::to_string(s.n_channels) +
                              " channels, checkpoint expects " + std::to_string(cfg.n_channels));
        if (s.label < 0 || std::size_t(s.label) >= cfg.n_classes)
            throw DataError("series " + s.id + " has a label outside the model's classes");
        labels.push_back(s.label);
    }
    std::vector<data::DenseView> views = make_views(ds, ck.stats);
    return eval_views(ck.params, views, labels, preds_out, scores_out);
}

} // namespace mtm::model
