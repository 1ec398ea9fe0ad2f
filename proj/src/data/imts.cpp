#include "mtm/data/imts.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>

#include <nlohmann/json.hpp>

#include "mtm/errors.hpp"

namespace mtm::data {

using nlohmann::json;

void canonicalize(EventSeries& s) {
    if (s.n_channels < 1) throw DataError("series " + s.id + ": n_channels must be >= 1");
    if (s.label < 0) throw DataError("series " + s.id + ": negative label");
    for (const Event& e : s.events) {
        if (!std::isfinite(e.v))
            throw DataError("series " + s.id + ": non-finite value on channel " +
                            std::to_string(e.c));
        if (!std::isfinite(e.t) || e.t < 0.0)
            throw DataError("series " + s.id + ": invalid time " + std::to_string(e.t));
        if (e.c < 0 || e.c >= s.n_channels)
            throw DataError("series " + s.id + ": channel " + std::to_string(e.c) +
                            " out of range [0," + std::to_string(s.n_channels) + ")");
    }
    std::sort(s.events.begin(), s.events.end(), [](const Event& a, const Event& b) {
        return a.t != b.t ? a.t < b.t : a.c < b.c;
    });
    for (std::size_t i = 1; i < s.events.size(); ++i)
        if (s.events[i].t == s.events[i - 1].t && s.events[i].c == s.events[i - 1].c)
            throw DataError("series " + s.id + ": duplicate event at (t=" +
                            std::to_string(s.events[i].t) + ", c=" +
                            std::to_string(s.events[i].c) + ")");
}

DenseView to_dense(const EventSeries& s) {
    DenseView d;
    for (const Event& e : s.events)
        if (d.times.empty() || e.t != d.times.back()) d.times.push_back(e.t);
    const std::size_t T = d.times.size();
    const std::size_t C = static_cast<std::size_t>(s.n_channels);
    d.values = diff::Array::zeros({T, C});
    d.observed = diff::Mask({T, C}, std::vector<std::uint8_t>(T * C, 0));
    std::size_t row = 0;
    for (const Event& e : s.events) {
        while (d.times[row] != e.t) ++row;
        d.values.at(row, static_cast<std::size_t>(e.c)) = e.v;
        d.observed.bits[row * C + static_cast<std::size_t>(e.c)] = 1;
    }
    return d;
}

namespace {

EventSeries parse_record(const json& j, std::size_t line_no) {
    const std::string where = "line " + std::to_string(line_no);
    if (!j.is_object()) throw ParseError(where + ": record is not an object");
    for (const auto& [key, _] : j.items())
        if (key != "id" && key != "label" && key != "n_channels" && key != "events")
            throw DataError(where + ": unknown key \"" + key + "\"");
    for (const char* key : {"id", "label", "n_channels", "events"})
        if (!j.contains(key)) throw ParseError(where + ": missing key \"" + std::string(key) + "\"");

    EventSeries s;
    if (!j["id"].is_string()) throw ParseError(where + ": id must be a string");
    s.id = j["id"].get<std::string>();
    if (!j["label"].is_number_integer()) throw ParseError(where + ": label must be an integer");
    s.label = j["label"].get<int>();
    if (!j["n_channels"].is_number_integer())
        throw ParseError(where + ": n_channels must be an integer");
    s.n_channels = j["n_channels"].get<int>();
    if (!j["events"].is_array()) throw ParseError(where + ": events must be an array");
    for (const json& ej : j["events"]) {
        if (!ej.is_object() || !ej.contains("t") || !ej.contains("c") || !ej.contains("v"))
            throw ParseError(where + ": event needs t, c, v");
        for (const auto& [key, _] : ej.items())
            if (key != "t" && key != "c" && key != "v")
                throw DataError(where + ": unknown event key \"" + key + "\"");
        if (!ej["t"].is_number() || !ej["c"].is_number_integer() || !ej["v"].is_number())
            throw ParseError(where + ": event field types must be (number, int, number)");
        s.events.push_back(Event{ej["t"].get<double>(), ej["c"].get<int>(), ej["v"].get<double>()});
    }
    return s;
}

} // namespace

std::vector<EventSeries> load_ndjson(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file: " + path);
    std::vector<EventSeries> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
        EventSeries s = parse_record(j, line_no);
        if (s.events.empty()) {
            std::cerr << "warning: dropping sample \"" << s.id << "\" (line " << line_no
                      << "): no events\n";
            continue;
        }
        canonicalize(s);
        if (!out.empty() && s.n_channels != out.front().n_channels)
            throw DataError("line " + std::to_string(line_no) + ": n_channels " +
                            std::to_string(s.n_channels) + " differs from earlier " +
                            std::to_string(out.front().n_channels));
        out.push_back(std::move(s));
    }
    return out;
}

void save_ndjson(const std::string& path, const std::vector<EventSeries>& dataset) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write dataset file: " + path);
    for (const EventSeries& s : dataset) {
        json events = json::array();
        for (const Event& e : s.events) events.push_back({{"t", e.t}, {"c", e.c}, {"v", e.v}});
        json j{{"id", s.id}, {"label", s.label}, {"n_channels", s.n_channels},
               {"events", std::move(events)}};
        out << j.dump() << "\n";
    }
    if (!out) throw DataError("write failed: " + path);
}

int n_classes_of(const std::vector<EventSeries>& dataset) {
    int m = 0;
    for (const EventSeries& s : dataset) m = std::max(m, s.label + 1);
    return m;
}

std::vector<std::pair<int, int>> co_occurring_pairs(const DenseView& d) {
    std::set<std::pair<int, int>> pairs;
    const std::size_t C = d.observed.shape[1];
    for (std::size_t i = 0; i < d.n_times(); ++i)
        for (std::size_t a = 0; a < C; ++a) {
            if (!d.observed.bits[i * C + a]) continue;
            for (std::size_t b = a + 1; b < C; ++b)
                if (d.observed.bits[i * C + b])
                    pairs.emplace(static_cast<int>(a), static_cast<int>(b));
        }
    return {pairs.begin(), pairs.end()};
}

double multi_observed_fraction(const DenseView& d) {
    if (d.n_times() == 0) return 0.0;
    const std::size_t C = d.observed.shape[1];
    std::size_t multi = 0;
    for (std::size_t i = 0; i < d.n_times(); ++i) {
        std::size_t seen = 0;
        for (std::size_t c = 0; c < C; ++c) seen += d.observed.bits[i * C + c];
        multi += seen >= 2;
    }
    return static_cast<double>(multi) / static_cast<double>(d.n_times());
}

} // namespace mtm::data
