#pragma once

#include <stdexcept>
#include <string>

namespace breachcast {

/// Failure categories shared by the C++ core and the C boundary.
enum class ErrorKind {
    domain,        ///< input outside an operation's precondition
    numerical,     ///< quadrature or integration failed to converge
    parse,         ///< malformed text input
    validation,    ///< parsed value violates a physical invariant
    config,        ///< inconsistent configuration
    schema,        ///< file schema version mismatch
    io,            ///< filesystem failure
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct DomainError : Error {
    explicit DomainError(const std::string& what) : Error(ErrorKind::domain, what) {}
};
struct NumericalError : Error {
    explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};
struct ParseError : Error {
    explicit ParseError(const std::string& what) : Error(ErrorKind::parse, what) {}
};
struct ValidationError : Error {
    explicit ValidationError(const std::string& what) : Error(ErrorKind::validation, what) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};
struct SchemaError : Error {
    explicit SchemaError(const std::string& what) : Error(ErrorKind::schema, what) {}
};
struct IoError : Error {
    explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

}  // namespace breachcast
