#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace specalign {

// Base for every error raised by the library. Callers that only care about
// "something went wrong" can catch this one.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape mismatch, non-finite values, out-of-range indices.
class InvalidInput : public Error {
public:
    using Error::Error;
};

// A configuration that is well-formed but not admissible for the instance,
// e.g. a step size above the stability limit.
class InvalidConfig : public Error {
public:
    using Error::Error;
};

// Training or gradient descent blew up (non-finite or increasing loss).
class Diverged : public Error {
public:
    Diverged(const std::string& what, long step)
        : Error(what + " (at step " + std::to_string(step) + ")"), step_(step) {}

    long step() const noexcept { return step_; }

private:
    long step_;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

} // namespace specalign
