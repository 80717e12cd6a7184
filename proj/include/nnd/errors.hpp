#pragma once

#include <stdexcept>
#include <string>

namespace nnd {

// Error categories map one-to-one onto the CLI exit codes.
enum class ErrorKind { Config = 2, Data = 3, Numerical = 4 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), m_kind(kind) {}
    ErrorKind kind() const noexcept { return m_kind; }
    int exit_code() const noexcept { return static_cast<int>(m_kind); }

private:
    ErrorKind m_kind;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

} // namespace nnd
