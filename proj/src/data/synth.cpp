#include "mtm/data/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <utility>

#include "mtm/errors.hpp"

namespace mtm::data {

namespace {

void validate(const SynthSpec& spec) {
    if (spec.n_samples < 1) throw ConfigError("synth: n_samples must be >= 1");
    if (spec.n_channels < 2) throw ConfigError("synth: n_channels must be >= 2");
    if (spec.classes < 2) throw ConfigError("synth: classes must be >= 2");
    if (spec.events_per_channel < 2) throw ConfigError("synth: events_per_channel must be >= 2");
    if (spec.alpha < 0.0 || spec.alpha > 1.0) throw ConfigError("synth: alpha must be in [0,1]");
    if (spec.f_min <= 0.0 || spec.f_max < spec.f_min) throw ConfigError("synth: bad frequency range");
    if (spec.noise_sd < 0.0) throw ConfigError("synth: noise_sd must be >= 0");
    if (spec.duration <= 0.0) throw ConfigError("synth: duration must be positive");
}

} // namespace

int synth_oracle_label(const std::vector<int>& signs, int classes) {
    int disagree = 0;
    for (std::size_t j = 1; j < signs.size(); ++j) disagree += signs[j] != signs[0];
    return disagree % classes;
}

std::vector<EventSeries> synth_generate(const SynthSpec& spec,
                                        std::vector<std::vector<int>>* signs_out) {
    validate(spec);
    if (signs_out) signs_out->clear();
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> utime(0.0, spec.duration);
    std::uniform_real_distribution<double> ufreq(spec.f_min, spec.f_max);
    std::uniform_real_distribution<double> uphase(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> uamp(0.8, 1.2);
    std::bernoulli_distribution fresh(spec.alpha);
    std::bernoulli_distribution coin(0.5);
    std::normal_distribution<double> noise(0.0, spec.noise_sd);

    const int C = spec.n_channels, K = spec.events_per_channel;
    std::vector<EventSeries> out;
    out.reserve(static_cast<std::size_t>(spec.n_samples));
    for (int i = 0; i < spec.n_samples; ++i) {
        std::vector<double> shared(static_cast<std::size_t>(K));
        for (double& t : shared) t = utime(rng);
        const double f = ufreq(rng);
        const double phi = uphase(rng);
        std::vector<int> signs(static_cast<std::size_t>(C));
        std::vector<double> amp(static_cast<std::size_t>(C));
        for (int j = 0; j < C; ++j) {
            signs[static_cast<std::size_t>(j)] = coin(rng) ? 1 : -1;
            amp[static_cast<std::size_t>(j)] =
                uamp(rng) * signs[static_cast<std::size_t>(j)];
        }

        EventSeries s;
        s.id = "synth-" + std::to_string(i);
        s.n_channels = C;
        s.label = synth_oracle_label(signs, spec.classes);
        std::set<std::pair<double, int>> taken;
        for (int j = 0; j < C; ++j)
            for (int k = 0; k < K; ++k) {
                double t = fresh(rng) ? utime(rng) : shared[static_cast<std::size_t>(k)];
                while (taken.count({t, j})) t = utime(rng);
                taken.insert({t, j});
                const double g = std::sin(2.0 * std::numbers::pi * f * t + phi);
                s.events.push_back(
                    Event{t, j, amp[static_cast<std::size_t>(j)] * g + noise(rng)});
            }
        canonicalize(s);
        out.push_back(std::move(s));
        if (signs_out) signs_out->push_back(std::move(signs));
    }
    return out;
}

} // namespace mtm::data
