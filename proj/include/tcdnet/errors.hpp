// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace tcdnet {

/// Base of every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or image sizes.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A caller violated an API precondition (non-scalar loss, missing gradient, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf produced or consumed by a computation.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Invalid or unknown configuration values.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Filesystem or stream failure.
class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed binary or text payload (bad magic, truncated file, ...).
class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace tcdnet
