#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace drnet {

// Error categories map one-to-one onto CLI exit codes (see tools/commands.cpp).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Non-finite values, divergence.
class NumericError : public Error {
public:
    using Error::Error;
};

class TrainingDivergence : public NumericError {
public:
    TrainingDivergence(const std::string& msg, std::size_t step)
        : NumericError(msg), step_(step) {}
    std::size_t step() const { return step_; }

private:
    std::size_t step_;
};

// Malformed input data. Carries the byte offset where parsing stopped.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, std::size_t offset)
        : Error(msg + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

class UnsupportedFormat : public ParseError {
public:
    using ParseError::ParseError;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Checkpoint loading.
class LoadError : public Error {
public:
    using Error::Error;
};
class BadMagic : public LoadError {
public:
    using LoadError::LoadError;
};
class VersionMismatch : public LoadError {
public:
    using LoadError::LoadError;
};
class TruncatedFile : public LoadError {
public:
    using LoadError::LoadError;
};
class ParamShapeMismatch : public LoadError {
public:
    ParamShapeMismatch(const std::string& msg, std::string layer)
        : LoadError(msg), layer_(std::move(layer)) {}
    const std::string& layer() const { return layer_; }

private:
    std::string layer_;
};

class GenerationError : public Error {
public:
    using Error::Error;
};

class SelectionError : public Error {
public:
    using Error::Error;
};

}  // namespace drnet
