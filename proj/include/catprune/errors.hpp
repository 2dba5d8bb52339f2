#pragma once

#include <stdexcept>
#include <string>

namespace catprune {

// Runtime failure while executing an otherwise valid request (exit code 1).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid usage, malformed input file, or violated precondition (exit code 2).
struct UsageError : Error {
    using Error::Error;
};

} // namespace catprune
