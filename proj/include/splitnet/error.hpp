#pragma once

#include <stdexcept>
#include <string>

namespace splitnet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad shapes, bad configuration, out-of-range levels.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Unreadable or unwritable files, malformed blobs, hash mismatches.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A stored artifact uses a format version this build cannot read.
class UnsupportedVersion : public IoError {
 public:
  using IoError::IoError;
};

/// A stored artifact no longer matches its recorded content hash.
class HashMismatch : public IoError {
 public:
  using IoError::IoError;
};

/// A checked run-time invariant (positivity, range, finiteness) was broken.
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace splitnet
