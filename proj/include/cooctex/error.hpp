#pragma once

#include <stdexcept>
#include <string>

namespace cooctex {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition on an argument was violated (bad k, even window, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Tensor, crop or condition shapes do not line up.
class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

/// Soft-assignment mass of a patch vanished (Z below its floor).
class DegenerateStatistics : public Error {
 public:
  using Error::Error;
};

/// k-means could not produce k distinct clusters.
class DegenerateClusters : public Error {
 public:
  using Error::Error;
};

/// A file on disk is malformed, truncated or of an unknown version.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

}  // namespace cooctex
