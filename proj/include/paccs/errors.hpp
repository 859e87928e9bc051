#pragma once

#include <stdexcept>
#include <string>

namespace paccs {

/// Error category; doubles as the CLI exit-code family.
enum class ErrorKind {
    validation,  // malformed or invariant-violating input data
    config,      // bad parameters / flags
    domain,      // numeric argument outside its domain
    integrity,   // archive structure, shape or fingerprint problems
    data,        // non-finite values in archive payloads
    divergence,  // training produced a non-finite loss
    io,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error(ErrorKind::validation, what) {}
};

class ParseError : public ValidationError {
public:
    ParseError(std::size_t line, const std::string& what)
        : ValidationError("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

class DomainError : public Error {
public:
    explicit DomainError(const std::string& what) : Error(ErrorKind::domain, what) {}
};

class IntegrityError : public Error {
public:
    explicit IntegrityError(const std::string& what) : Error(ErrorKind::integrity, what) {}
};

/// Missing manifest, layer or variant file.
class StructuralError : public IntegrityError {
public:
    explicit StructuralError(const std::string& what) : IntegrityError(what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class DivergenceError : public Error {
public:
    DivergenceError(int run, int epoch, const std::string& what)
        : Error(ErrorKind::divergence, what), run_(run), epoch_(epoch) {}

    int run() const noexcept { return run_; }
    int epoch() const noexcept { return epoch_; }

private:
    int run_;
    int epoch_;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

/// Stable lowercase tag used in the CLI's machine-parsable error prefix.
const char* to_string(ErrorKind kind) noexcept;

/// CLI exit code: 0 ok, 2 validation/config/domain, 3 integrity/data/io, 4 divergence.
int exit_code(ErrorKind kind) noexcept;

}  // namespace paccs
