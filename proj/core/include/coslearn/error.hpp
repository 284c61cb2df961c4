// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace coslearn {

/// Base of every error thrown by the library.
///
/// Two families exist: ValidationError (bad input, malformed files, invalid
/// configuration; the CLI maps it to exit code 1) and NumericError (runtime
/// numeric failure such as divergence or a degenerate vector; exit code 2).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

/// Operand shapes do not agree.
class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A class label lies outside [0, n).
class LabelError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Unknown name in a lookup (class, node, loss kind).
class LookupError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Malformed file or document.
class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class HierarchyError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class CycleError : public HierarchyError {
 public:
  using HierarchyError::HierarchyError;
};

class ForestError : public HierarchyError {
 public:
  using HierarchyError::HierarchyError;
};

class DuplicateEdgeError : public HierarchyError {
 public:
  using HierarchyError::HierarchyError;
};

/// I/O failure; the message names the path.
class IoError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A vector whose L2 norm is at or below eps was normalized.
class DegenerateVectorError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// A similarity matrix is not positive semidefinite.
class NotPsdError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Training produced non-finite or exploding values.
class DivergenceError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace coslearn
