#pragma once

#include <stdexcept>
#include <string>

namespace pnsis {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad call-site input (sizes, ranges, missing labels).
struct ArgumentError : Error {
    using Error::Error;
};

// Malformed file content; carries a line number when known.
struct ParseError : Error {
    explicit ParseError(const std::string& msg, long line = -1)
        : Error(line >= 0 ? msg + " (line " + std::to_string(line) + ")" : msg), line_number(line) {}
    long line_number;
};

// Structurally valid file whose dimensions are inconsistent.
struct SchemaError : Error {
    explicit SchemaError(const std::string& msg, long line = -1)
        : Error(line >= 0 ? msg + " (line " + std::to_string(line) + ")" : msg), line_number(line) {}
    long line_number;
};

struct IoError : Error {
    using Error::Error;
};

// Non-finite value encountered during numeric evaluation.
struct NumericError : Error {
    using Error::Error;
};

// Requested configuration exceeds a hard resource ceiling.
struct CapacityError : Error {
    using Error::Error;
};

}  // namespace pnsis
