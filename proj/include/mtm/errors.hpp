#pragma once

#include <stdexcept>
#include <string>

namespace mtm {

// Error taxonomy mirrored by the CLI exit codes: config 2, data 3, numeric 4.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Bad shapes are contract violations on the caller's side.
struct ShapeError : ConfigError {
    explicit ShapeError(const std::string& msg) : ConfigError(msg) {}
};

struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(msg) {}
};

struct ParseError : DataError {
    explicit ParseError(const std::string& msg) : DataError(msg) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

// A reduction group or softmax row with no participating elements.
struct DegenerateError : NumericError {
    explicit DegenerateError(const std::string& msg) : NumericError(msg) {}
};

} // namespace mtm
