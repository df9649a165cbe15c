#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace planloc {

// Base class for every error raised by the library. The CLI maps these to
// exit status 1 and prints what() verbatim.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

// Inconsistent or missing configuration (class tables, embeddings, pitch).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Binary container does not match its documented layout.
class FormatError : public Error {
public:
    using Error::Error;
};

// Probability volume with no usable mass.
class DegenerateError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t byte_offset)
        : Error(what + " (at byte " + std::to_string(byte_offset) + ")"),
          offset_(byte_offset) {}

    std::size_t byte_offset() const { return offset_; }

private:
    std::size_t offset_;
};

class VersionError : public Error {
public:
    using Error::Error;
};

class TransportError : public Error {
public:
    using Error::Error;
};

class ThrottledError : public TransportError {
public:
    using TransportError::TransportError;
};

}  // namespace planloc
