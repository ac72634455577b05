#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace facecycle {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed manifest record. `line()` is 1-based; 0 means the whole file.
class ManifestError : public Error {
public:
    ManifestError(const std::string& path, std::size_t line, const std::string& what)
        : Error(path + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
          line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Image could not be read, decoded or written.
class ImageError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

/// A loss term evaluated to NaN or infinity. `term()` names the offending term.
class NonFiniteError : public Error {
public:
    explicit NonFiniteError(std::string term)
        : Error("non-finite value in loss term '" + term + "'"), term_(std::move(term)) {}
    const std::string& term() const noexcept { return term_; }

private:
    std::string term_;
};

class CheckpointError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration value. `key()` is the dotted path of the first offending key.
class ConfigError : public Error {
public:
    ConfigError(std::string key, const std::string& what)
        : Error("config key '" + key + "': " + what), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

}  // namespace facecycle
