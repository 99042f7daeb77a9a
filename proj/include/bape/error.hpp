#pragma once

#include <stdexcept>
#include <string>

namespace bape {

// Root of every error raised by the library. The CLI maps IoError (and its
// subclasses) to exit code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of a function.
class DomainError : public Error {
public:
  using Error::Error;
};

class DimensionMismatch : public Error {
public:
  DimensionMismatch(const std::string& where, long expected, long actual)
      : Error(where + ": dimension mismatch (expected " + std::to_string(expected) +
              ", got " + std::to_string(actual) + ")") {}
};

// The posterior resultant beta0*m0 + sum(z) is the zero vector, so the
// posterior direction is undefined.
class DegeneratePosterior : public Error {
public:
  using Error::Error;
};

// beta/alpha is so close to one that the concentration is unbounded.
class ConcentrationOverflow : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class NotFitted : public Error {
public:
  using Error::Error;
};

class TrainingDiverged : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

class BadMagic : public IoError {
public:
  using IoError::IoError;
};

class UnsupportedVersion : public IoError {
public:
  using IoError::IoError;
};

class TruncatedFile : public IoError {
public:
  using IoError::IoError;
};

class LabelOutOfRange : public IoError {
public:
  using IoError::IoError;
};

}  // namespace bape
