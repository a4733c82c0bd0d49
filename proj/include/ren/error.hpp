#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ren {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or layer shapes that do not fit together.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Bad user-supplied input: config values, files, CLI arguments.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Malformed bytes in one of the on-disk formats.
class FormatError : public InputError {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : InputError(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Segmentation found no pixels inside the foreground depth band.
class NoForegroundError : public Error {
 public:
  using Error::Error;
};

}  // namespace ren
