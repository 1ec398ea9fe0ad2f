#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtm/metrics/metrics.hpp"

namespace mtm::cli {

// Canonical JSON form of a MetricsReport; every command that emits metrics
// uses it, and `compare` reads metric values back out of it by key.
nlohmann::json report_json(const metrics::MetricsReport& r);

// Paper-style "88.0 ±1.0" rendering of a mean and sample standard deviation
// given on the [0, 1] scale.
std::string mean_std_string(double mean, double std_dev);

// Dispatches one command (argv without the program name) and returns the
// process exit code: 0 ok, 2 config error, 3 data error, 4 numeric error.
// All diagnostics go to stderr; command output goes to stdout and --out.
int run(const std::vector<std::string>& args);

int run(int argc, char** argv);

} // namespace mtm::cli
