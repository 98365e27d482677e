// Copyright 2026 The semanti Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace semanti {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& msg) : Error("invalid argument: " + msg) {}
};

/// An encoded image could not be parsed.
class DecodeError : public Error {
public:
    DecodeError(const std::string& msg, std::size_t byte_offset)
        : Error("decode error at byte " + std::to_string(byte_offset) + ": " + msg),
          offset(byte_offset) {}
    std::size_t offset;
};

/// A tensor operation produced a non-finite value or was misused.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error("numeric error: " + msg) {}
};

/// Filesystem-level failure, always carrying the offending path.
class IoError : public Error {
public:
    IoError(const std::string& msg, const std::string& path)
        : Error("io error: " + msg + ": " + path) {}
};

/// Bad or unknown key/value in a config or manifest file.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

}  // namespace semanti
