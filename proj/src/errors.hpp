#pragma once

#include <stdexcept>
#include <string>

namespace tailgame {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// malformed input text (svmlight files, partition files, checkpoints)
struct ParseError : Error {
    ParseError(long line_no, const std::string& what)
        : Error("parse error at line " + std::to_string(line_no) + ": " + what),
          line(line_no) {}
    long line;
};

// invalid parameter combinations (bad N/rho, infeasible prevalence range, ...)
struct ConfigError : Error {
    using Error::Error;
};

// structurally invalid data for an operation (empty dataset, shape mismatch, ...)
struct DataError : Error {
    using Error::Error;
};

// non-finite objectives, undefined metrics, numeric failures
struct NumericError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace tailgame
