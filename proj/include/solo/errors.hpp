#pragma once

#include <stdexcept>
#include <string>

namespace solo {

/// Base class for every error raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller-supplied value violated a precondition (non-positive dims, empty grid, ...).
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

/// Image dimensions are not multiples of the patch size.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

/// Tensor / matrix shapes are inconsistent.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A token id falls outside the vocabulary.
class VocabularyError : public Error {
 public:
  using Error::Error;
};

/// An example cannot be packed (vision span longer than the sequence capacity).
class UnpackableExampleError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration (unknown stage, all-zero weights, bad schedule bounds, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A manifest or corpus file could not be read; message names the dataset.
class IngestionError : public Error {
 public:
  using Error::Error;
};

/// Base class for binary file format violations.
class FormatError : public Error {
 public:
  using Error::Error;
};

class MagicMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncationError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// CRC mismatch; message names the record index.
class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace solo
