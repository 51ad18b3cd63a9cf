// Error types shared by every datt module.

#ifndef DATT_ERROR_H_
#define DATT_ERROR_H_

#include <stdexcept>
#include <string>

namespace datt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor extents.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN input, zero-norm vectors and similar.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Misuse of a differentiation tape (second backward, mixed tapes).
class TapeError : public Error {
 public:
  using Error::Error;
};

// Caller supplied an out-of-range or otherwise invalid value.
class InputError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents (WAV, FBNK, checkpoint).
class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace datt

#endif  // DATT_ERROR_H_
