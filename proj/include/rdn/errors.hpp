// Copyright 2026 The RDN-SR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace rdn {

// Root of every error this library throws. The CLI maps the subclasses onto
// exit codes: UsageError/ConfigError/DimensionError/CheckpointError -> 2,
// NumericError -> 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class UsageError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class CheckpointError : public Error {
public:
    using Error::Error;
};

class CheckpointVersionError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

class CheckpointTruncatedError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

// Checkpoint tensors disagree with the model configuration being loaded into.
class ShapeMismatchError : public CheckpointError {
public:
    ShapeMismatchError(const std::string& tensor, const std::string& detail)
        : CheckpointError("shape mismatch at tensor '" + tensor + "': " + detail), tensor_(tensor) {}

    const std::string& tensor() const noexcept { return tensor_; }

private:
    std::string tensor_;
};

}  // namespace rdn
