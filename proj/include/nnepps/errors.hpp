#pragma once

#include <stdexcept>
#include <string>

namespace nnepps {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Unreadable/unwritable files, size mismatches, malformed sidecars.
class IoError : public Error {
public:
  using Error::Error;
};

/// A value object (volume, mask, region, spec) violates its invariants.
class ValidationError : public Error {
public:
  using Error::Error;
};

/// A mask tap leaves the grid under BoundaryPolicy::reject.
class BoundaryError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

/// The input image has a negative mean; no non-negative redistribution exists.
class InfeasibleError : public Error {
public:
  using Error::Error;
};

/// A dense oracle was asked to solve an instance above its size cap.
class SizeLimitError : public Error {
public:
  using Error::Error;
};

}  // namespace nnepps
