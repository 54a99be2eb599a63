#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace refagent {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(std::string path, int line, const std::string& message)
        : Error(path + ":" + std::to_string(line) + ": " + message), path_(std::move(path)), line_(line) {}

    const std::string& path() const { return path_; }
    int line() const { return line_; }

private:
    std::string path_;
    int line_;
};

class LookupError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

class ScoringError : public Error {
public:
    using Error::Error;
};

// Missing build toolchain, as opposed to a failing build.
class EnvironmentError : public Error {
public:
    using Error::Error;
};

// Remote or scripted completion failure. `status` is 0 when no HTTP response
// was received.
class BackendError : public Error {
public:
    BackendError(const std::string& message, int status = 0, std::string body = {}, bool retriable = false)
        : Error(message), status_(status), body_(std::move(body)), retriable_(retriable) {}

    int status() const { return status_; }
    const std::string& body() const { return body_; }
    bool retriable() const { return retriable_; }

private:
    int status_;
    std::string body_;
    bool retriable_;
};

// Scripted backend ran out of responses.
class ScriptExhaustedError : public BackendError {
public:
    explicit ScriptExhaustedError(const std::string& message) : BackendError(message) {}
};

class ReplayDivergenceError : public BackendError {
public:
    ReplayDivergenceError(const std::string& field, const std::string& message)
        : BackendError(message), field_(field) {}

    // JSON path of the first differing field, e.g. `messages[3].content`.
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

}  // namespace refagent
