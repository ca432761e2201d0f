#pragma once

#include <stdexcept>
#include <string>

namespace lloca {

/// Input violates a mathematical precondition (non-timelike boost vector, y <= 0, ...).
class DomainError : public std::domain_error {
public:
    explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

/// Feature length or tensor order does not match its representation.
class DimensionError : public std::invalid_argument {
public:
    explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

/// Frame construction inputs are (numerically) linearly dependent.
class DegenerateInput : public std::runtime_error {
public:
    explicit DegenerateInput(const std::string& what) : std::runtime_error(what) {}
};

/// Autodiff operands have incompatible shapes.
class ShapeError : public std::invalid_argument {
public:
    explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

/// Backward pass requested on a node that does not belong to the tape.
class GraphError : public std::logic_error {
public:
    explicit GraphError(const std::string& what) : std::logic_error(what) {}
};

/// Malformed or truncated binary file.
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

/// Bad key, value or combination in a run configuration.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

} // namespace lloca
