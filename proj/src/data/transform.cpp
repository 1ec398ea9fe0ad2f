#include "mtm/data/transform.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "mtm/errors.hpp"

namespace mtm::data {

using nlohmann::json;

NormStats fit_stats(const std::vector<EventSeries>& train) {
    if (train.empty()) throw DataError("fit_stats: empty training set");
    const std::size_t C = static_cast<std::size_t>(train.front().n_channels);
    std::vector<double> sum(C, 0.0), sumsq(C, 0.0);
    std::vector<std::size_t> count(C, 0);
    for (const EventSeries& s : train)
        for (const Event& e : s.events) {
            const std::size_t c = static_cast<std::size_t>(e.c);
            sum[c] += e.v;
            sumsq[c] += e.v * e.v;
            ++count[c];
        }
    NormStats st;
    st.mean.resize(C);
    st.std_dev.resize(C);
    for (std::size_t c = 0; c < C; ++c) {
        const double n = count[c] ? static_cast<double>(count[c]) : 1.0;
        st.mean[c] = sum[c] / n;
        const double var = std::max(0.0, sumsq[c] / n - st.mean[c] * st.mean[c]);
        st.std_dev[c] = std::max(std::sqrt(var), 1e-8);
    }
    return st;
}

void apply_stats(std::vector<EventSeries>& dataset, const NormStats& stats) {
    for (EventSeries& s : dataset) {
        if (static_cast<std::size_t>(s.n_channels) != stats.mean.size())
            throw ConfigError("apply_stats: stats cover " + std::to_string(stats.mean.size()) +
                              " channels, sample has " + std::to_string(s.n_channels));
        for (Event& e : s.events) {
            const std::size_t c = static_cast<std::size_t>(e.c);
            e.v = (e.v - stats.mean[c]) / stats.std_dev[c];
        }
    }
}

void save_stats(const std::string& path, const NormStats& stats) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write stats file: " + path);
    out << json{{"mean", stats.mean}, {"std", stats.std_dev}}.dump() << "\n";
}

NormStats load_stats(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open stats file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(std::string("stats file: ") + e.what());
    }
    if (!j.contains("mean") || !j.contains("std")) throw DataError("stats file needs mean and std");
    NormStats st;
    st.mean = j["mean"].get<std::vector<double>>();
    st.std_dev = j["std"].get<std::vector<double>>();
    if (st.mean.size() != st.std_dev.size()) throw DataError("stats mean/std length mismatch");
    return st;
}

std::vector<EventSeries> mask_channels(const std::vector<EventSeries>& dataset, double ratio,
                                       std::uint64_t seed) {
    if (ratio < 0.0 || ratio >= 1.0) throw ConfigError("mask ratio must be in [0,1)");
    if (dataset.empty()) return {};
    const int C = dataset.front().n_channels;
    const int k = static_cast<int>(ratio * C);
    std::vector<EventSeries> out;
    out.reserve(dataset.size());
    std::mt19937_64 rng(seed);
    for (const EventSeries& s : dataset) {
        std::vector<int> channels(static_cast<std::size_t>(C));
        std::iota(channels.begin(), channels.end(), 0);
        std::shuffle(channels.begin(), channels.end(), rng);
        std::vector<std::uint8_t> drop(static_cast<std::size_t>(C), 0);
        for (int i = 0; i < k; ++i) drop[static_cast<std::size_t>(channels[i])] = 1;
        EventSeries masked;
        masked.id = s.id;
        masked.label = s.label;
        masked.n_channels = s.n_channels;
        for (const Event& e : s.events)
            if (!drop[static_cast<std::size_t>(e.c)]) masked.events.push_back(e);
        if (masked.events.empty()) {
            std::cerr << "warning: sample \"" << s.id << "\" lost every event to masking, dropped\n";
            continue;
        }
        out.push_back(std::move(masked));
    }
    return out;
}

Splits split(const std::vector<EventSeries>& dataset, const SplitSpec& spec) {
    if (dataset.empty()) throw DataError("split: empty dataset");
    if (spec.subset_id < 1 || spec.subset_id > 5)
        throw ConfigError("split: subset_id must be in 1..5");
    const double total = spec.train_frac + spec.val_frac + spec.test_frac;
    if (std::fabs(total - 1.0) > 1e-9) throw ConfigError("split: fractions must sum to 1");

    const int m = n_classes_of(dataset);
    std::vector<std::vector<std::size_t>> groups(static_cast<std::size_t>(m));
    for (std::size_t i = 0; i < dataset.size(); ++i)
        groups[static_cast<std::size_t>(dataset[i].label)].push_back(i);

    bool stratified = true;
    for (std::size_t c = 0; c < groups.size(); ++c)
        if (groups[c].size() < 3) {
            std::cerr << "warning: class " << c << " has " << groups[c].size()
                      << " samples; splitting without stratification\n";
            stratified = false;
            break;
        }
    if (!stratified) {
        groups.clear();
        groups.emplace_back(dataset.size());
        std::iota(groups[0].begin(), groups[0].end(), 0);
    }

    std::mt19937_64 rng(spec.seed * 0x9E3779B97F4A7C15ULL +
                        static_cast<std::uint64_t>(spec.subset_id));
    // Deal each class across the sequence at even quantiles, then cut the
    // merged sequence at exact global boundaries: split sizes are exact and
    // every class lands within one sample of its proportion in each part.
    struct Keyed {
        double key;
        std::size_t cls, idx;
    };
    std::vector<Keyed> order;
    order.reserve(dataset.size());
    for (std::size_t c = 0; c < groups.size(); ++c) {
        std::shuffle(groups[c].begin(), groups[c].end(), rng);
        const double m = static_cast<double>(groups[c].size());
        for (std::size_t i = 0; i < groups[c].size(); ++i)
            order.push_back(Keyed{(static_cast<double>(i) + 0.5) / m, c, groups[c][i]});
    }
    std::sort(order.begin(), order.end(), [](const Keyed& a, const Keyed& b) {
        if (a.key != b.key) return a.key < b.key;
        return a.cls < b.cls;
    });

    const std::size_t n = order.size();
    const std::size_t n_train = static_cast<std::size_t>(spec.train_frac * n);
    const std::size_t n_val = static_cast<std::size_t>(spec.val_frac * n);
    Splits out;
    for (std::size_t i = 0; i < n; ++i) {
        const EventSeries& s = dataset[order[i].idx];
        if (i < n_train)
            out.train.push_back(s);
        else if (i < n_train + n_val)
            out.val.push_back(s);
        else
            out.test.push_back(s);
    }
    return out;
}

} // namespace mtm::data
