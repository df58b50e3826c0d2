#pragma once

#include <stdexcept>
#include <string>

namespace buzz {

// Error hierarchy shared by all modules. The CLI maps exit codes as:
// 0 success, 2 config error, 3 data error, 4 provider error, 5 internal.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    virtual int exit_code() const noexcept { return 5; }
};

class ConfigError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

class DataError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

class ProviderError : public Error {
public:
    explicit ProviderError(const std::string& what, int http_status = 0)
        : Error(what), http_status_(http_status) {}
    int exit_code() const noexcept override { return 4; }
    int http_status() const noexcept { return http_status_; }

private:
    int http_status_;
};

class InternalError : public Error {
public:
    using Error::Error;
};

// Raised when an LLM output contains no numeric token at all; callers of the
// few-shot baseline catch it and score the instance as a failure.
class ExtractionError : public DataError {
public:
    using DataError::DataError;
};

}  // namespace buzz
