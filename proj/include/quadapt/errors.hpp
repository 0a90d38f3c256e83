#pragma once

#include <stdexcept>
#include <string>

namespace quadapt {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes, even kernel sides, adapter/base width mismatch.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Bad argument values: invalid configs, out-of-range class index, empty mask,
// unknown attach point, frozen parameter registered as trainable.
class ValueError : public Error {
public:
    using Error::Error;
};

// NaN or Inf encountered in tensor data.
class NonFiniteError : public Error {
public:
    using Error::Error;
};

// backward() misuse: non-scalar root or tensor detached from the tape.
class TapeError : public Error {
public:
    using Error::Error;
};

// Checkpoint manifest/blob problems: manifest mismatch, corrupt blob, checksum.
class CheckpointError : public Error {
public:
    using Error::Error;
};

// Filesystem failures.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace quadapt
