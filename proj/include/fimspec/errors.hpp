#pragma once

#include <limits>
#include <stdexcept>
#include <string>

namespace fimspec {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    [[nodiscard]] virtual const char *kind() const noexcept { return "Error"; }
};

class DomainError : public Error {
public:
    using Error::Error;
    [[nodiscard]] const char *kind() const noexcept override { return "DomainError"; }
};

// Non-finite value met during integration or propagation. `node` is the
// abscissa (or NaN when no single node is to blame).
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string &what, double node = std::numeric_limits<double>::quiet_NaN())
        : Error(what), node_(node) {}
    [[nodiscard]] const char *kind() const noexcept override { return "NumericalError"; }
    [[nodiscard]] double node() const noexcept { return node_; }

private:
    double node_;
};

class ShapeError : public Error {
public:
    using Error::Error;
    [[nodiscard]] const char *kind() const noexcept override { return "ShapeError"; }
};

class ParameterizationError : public Error {
public:
    using Error::Error;
    [[nodiscard]] const char *kind() const noexcept override { return "ParameterizationError"; }
};

class DivergenceError : public Error {
public:
    DivergenceError(const std::string &what, int step) : Error(what), step_(step) {}
    [[nodiscard]] const char *kind() const noexcept override { return "DivergenceError"; }
    [[nodiscard]] int step() const noexcept { return step_; }

private:
    int step_;
};

class ConfigError : public Error {
public:
    ConfigError(const std::string &what, int line = 0, std::string field = {})
        : Error(what), line_(line), field_(std::move(field)) {}
    [[nodiscard]] const char *kind() const noexcept override { return "ConfigError"; }
    [[nodiscard]] int line() const noexcept { return line_; }
    [[nodiscard]] const std::string &field() const noexcept { return field_; }

private:
    int line_;
    std::string field_;
};

}  // namespace fimspec
