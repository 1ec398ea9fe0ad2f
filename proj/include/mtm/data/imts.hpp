#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mtm/diff/array.hpp"

namespace mtm::data {

struct Event {
    double t = 0.0;
    int c = 0;
    double v = 0.0;
};

// One labeled sample: sparse (t, channel, value) observations.
struct EventSeries {
    std::string id;
    std::vector<Event> events;
    int n_channels = 0;
    int label = 0;
};

// Grid form of a series: times are the distinct observation times, values
// and observed are T x C. Unobserved cells hold 0.0 and a false bit.
struct DenseView {
    std::vector<double> times;
    diff::Array values;
    diff::Mask observed;

    std::size_t n_times() const { return times.size(); }
};

// Sorts events by (t, c) and validates the series. Throws DataError on a
// duplicate (t, c), channel out of range, or a non-finite value.
void canonicalize(EventSeries& s);

DenseView to_dense(const EventSeries& s);

// One sample per NDJSON line. Series come back canonicalized; records with
// zero events are dropped with a warning. All lines must agree on
// n_channels.
std::vector<EventSeries> load_ndjson(const std::string& path);
void save_ndjson(const std::string& path, const std::vector<EventSeries>& dataset);

int n_classes_of(const std::vector<EventSeries>& dataset);

// Channel pairs observed together at some timepoint.
std::vector<std::pair<int, int>> co_occurring_pairs(const DenseView& d);
// Fraction of timepoints with at least two observed channels.
double multi_observed_fraction(const DenseView& d);

} // namespace mtm::data
