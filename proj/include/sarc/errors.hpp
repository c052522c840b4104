#pragma once

#include <stdexcept>
#include <string>

namespace sarc {

// Common base so callers can catch everything the toolkit throws.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes (the message names both shapes).
struct ShapeError : Error {
    using Error::Error;
};

// Row/element index outside a tensor's bounds.
struct IndexError : Error {
    using Error::Error;
};

// Invalid model or run configuration (bad dims, bad flags, bad CLI usage).
struct ConfigError : Error {
    using Error::Error;
};

// An operation was called outside its stated preconditions.
struct ContractError : Error {
    using Error::Error;
};

// Non-finite values where finite ones are required (loss, gradients, inputs).
struct NumericError : Error {
    using Error::Error;
};

// Malformed or inconsistent input data (datasets, embeddings, checkpoints).
struct DataError : Error {
    using Error::Error;
};

// Filesystem-level failure (missing or unreadable/unwritable files).
struct IoError : Error {
    using Error::Error;
};

}  // namespace sarc
