#pragma once

#include <stdexcept>
#include <string>

namespace lavse {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or signal dimensions that do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Malformed serialized data (checkpoints, manifests, WAV, PPM).
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace lavse
