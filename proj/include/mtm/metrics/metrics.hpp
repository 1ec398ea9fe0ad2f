#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace mtm::metrics {

// Mann-Whitney statistic: P(score+ > score-) + 0.5 P(tie), via one sorted
// sweep with average ranks for tie groups. Needs both classes present.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// Average precision: sum of (R_k - R_{k-1}) * P_k over descending distinct
// score thresholds. Needs at least one positive.
double auprc(const std::vector<double>& scores, const std::vector<int>& labels);

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Unweighted mean of per-class precision/recall/F1; empty denominators
// contribute 0.
Prf macro_prf(const std::vector<int>& preds, const std::vector<int>& labels, int n_classes);

double accuracy(const std::vector<int>& preds, const std::vector<int>& labels);

// confusion[true_label][predicted]
std::vector<std::vector<std::size_t>> confusion_matrix(const std::vector<int>& preds,
                                                       const std::vector<int>& labels,
                                                       int n_classes);

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
};

// Two-sided Welch t-test; p through the regularized incomplete beta
// function. Each sample needs >=2 values and nonzero variance.
WelchResult welch_ttest(const std::vector<double>& a, const std::vector<double>& b);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double betainc_reg(double a, double b, double x);

struct MetricsReport {
    bool binary = false;
    double auroc = 0.0; // meaningful only when binary
    double auprc = 0.0;
    double accuracy = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    std::size_t n_samples = 0;
    std::vector<std::vector<std::size_t>> confusion;
    std::string config_hash;
    std::uint64_t seed = 0;
};

// Builds the full report from eval outputs. `pos_scores` are the
// positive-class probabilities, used only for the binary case.
MetricsReport build_report(const std::vector<int>& preds, const std::vector<int>& labels,
                           const std::vector<double>& pos_scores, int n_classes);

} // namespace mtm::metrics
