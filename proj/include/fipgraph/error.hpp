#pragma once

#include <stdexcept>
#include <string>

namespace fipgraph {

/// Base for every domain failure (bad netlist, shape mismatch, bad file).
/// The CLI maps these to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& message, int line)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + message : message), line_(line) {}

    [[nodiscard]] int line() const { return line_; }

private:
    int line_;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class SchemaError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace fipgraph
