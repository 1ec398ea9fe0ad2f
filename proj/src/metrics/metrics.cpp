#include "mtm/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mtm/errors.hpp"

namespace mtm::metrics {

namespace {

void require_paired(std::size_t ns, std::size_t nl, const char* op) {
    if (ns != nl)
        throw ShapeError(std::string(op) + ": " + std::to_string(ns) + " scores vs " +
                         std::to_string(nl) + " labels");
    if (ns == 0) throw DegenerateError(std::string(op) + ": empty input");
}

} // namespace

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    require_paired(scores.size(), labels.size(), "auroc");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (int l : labels) n_pos += l != 0;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw DegenerateError("auroc: needs both classes, got a single-class input");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Rank-sum over positives with average ranks inside tie groups. Ranks are
    // half-integers, so the accumulation below is exact.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] != 0) rank_sum_pos += avg_rank;
        i = j;
    }
    const double u = rank_sum_pos -
                     static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auprc(const std::vector<double>& scores, const std::vector<int>& labels) {
    require_paired(scores.size(), labels.size(), "auprc");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (int l : labels) n_pos += l != 0;
    if (n_pos == 0) throw DegenerateError("auprc: no positive samples");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double ap = 0.0;
    double prev_recall = 0.0;
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] != 0)
                ++tp;
            else
                ++fp;
        }
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

std::vector<std::vector<std::size_t>> confusion_matrix(const std::vector<int>& preds,
                                                       const std::vector<int>& labels,
                                                       int n_classes) {
    require_paired(preds.size(), labels.size(), "confusion_matrix");
    std::vector<std::vector<std::size_t>> cm(static_cast<std::size_t>(n_classes),
                                             std::vector<std::size_t>(
                                                 static_cast<std::size_t>(n_classes), 0));
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= n_classes || preds[i] < 0 || preds[i] >= n_classes)
            throw DataError("confusion_matrix: class id out of range at sample " +
                            std::to_string(i));
        cm[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(preds[i])]++;
    }
    return cm;
}

Prf macro_prf(const std::vector<int>& preds, const std::vector<int>& labels, int n_classes) {
    const auto cm = confusion_matrix(preds, labels, n_classes);
    const std::size_t m = static_cast<std::size_t>(n_classes);
    Prf out;
    for (std::size_t c = 0; c < m; ++c) {
        std::size_t tp = cm[c][c], pred_c = 0, true_c = 0;
        for (std::size_t k = 0; k < m; ++k) {
            pred_c += cm[k][c];
            true_c += cm[c][k];
        }
        const double p = pred_c == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(pred_c);
        const double r = true_c == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(true_c);
        const double f = p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
        out.precision += p;
        out.recall += r;
        out.f1 += f;
    }
    out.precision /= static_cast<double>(m);
    out.recall /= static_cast<double>(m);
    out.f1 /= static_cast<double>(m);
    return out;
}

double accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
    require_paired(preds.size(), labels.size(), "accuracy");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == labels[i];
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

namespace {

// Continued fraction for the incomplete beta (modified Lentz).
double betacf(double a, double b, double x) {
    constexpr int max_iter = 300;
    constexpr double eps = 3e-16, tiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) return h;
    }
    throw NumericError("betainc: continued fraction did not converge");
}

} // namespace

double betainc_reg(double a, double b, double x) {
    if (a <= 0.0 || b <= 0.0) throw NumericError("betainc: parameters must be positive");
    if (x < 0.0 || x > 1.0) throw NumericError("betainc: x outside [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

WelchResult welch_ttest(const std::vector<double>& a_in, const std::vector<double>& b_in) {
    if (a_in.size() < 2 || b_in.size() < 2)
        throw DegenerateError("welch_ttest: each sample needs at least 2 values");
    // Canonical accumulation order makes the result permutation-invariant.
    std::vector<double> a = a_in, b = b_in;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / na;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / nb;
    double va = 0.0, vb = 0.0;
    for (double x : a) va += (x - ma) * (x - ma);
    for (double x : b) vb += (x - mb) * (x - mb);
    va /= na - 1.0;
    vb /= nb - 1.0;
    if (va == 0.0 || vb == 0.0)
        throw DegenerateError("welch_ttest: zero variance in a sample");

    WelchResult r;
    const double se2 = va / na + vb / nb;
    r.t = (ma - mb) / std::sqrt(se2);
    r.df = se2 * se2 /
           ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
    r.p = betainc_reg(r.df / 2.0, 0.5, r.df / (r.df + r.t * r.t));
    return r;
}

MetricsReport build_report(const std::vector<int>& preds, const std::vector<int>& labels,
                           const std::vector<double>& pos_scores, int n_classes) {
    MetricsReport rep;
    rep.n_samples = labels.size();
    rep.accuracy = accuracy(preds, labels);
    const Prf prf = macro_prf(preds, labels, n_classes);
    rep.macro_precision = prf.precision;
    rep.macro_recall = prf.recall;
    rep.macro_f1 = prf.f1;
    rep.confusion = confusion_matrix(preds, labels, n_classes);
    rep.binary = n_classes == 2;
    if (rep.binary) {
        rep.auroc = auroc(pos_scores, labels);
        rep.auprc = auprc(pos_scores, labels);
    }
    return rep;
}

} // namespace mtm::metrics
