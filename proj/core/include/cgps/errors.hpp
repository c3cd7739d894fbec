#pragma once

#include <stdexcept>
#include <string>

namespace cgps {

// Shape or argument contract violation in tensor/nn code.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed corpus files, unknown tokens, count mismatches.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite losses or gradients, failed numeric checks.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Process exit codes used by the CLI.
enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 2,
    kExitData = 3,
    kExitNumeric = 4,
};

}  // namespace cgps
