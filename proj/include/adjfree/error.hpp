#pragma once

#include <stdexcept>
#include <string>

namespace adjfree {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller violated a documented precondition (bad argument, shape mismatch).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// RIFF/WAVE container could not be parsed.
class WavFormatError : public Error {
 public:
  using Error::Error;
};

/// Well-formed WAV whose encoding is not 16-bit mono PCM.
class UnsupportedEncoding : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Failure reported by (or while talking to) a classifier.
class ClassifierError : public Error {
 public:
  using Error::Error;
};

/// External classifier replied with something that violates the line protocol.
class ProtocolError : public ClassifierError {
 public:
  using ClassifierError::ClassifierError;
};

/// External classifier did not answer within the configured deadline.
class TimeoutError : public ClassifierError {
 public:
  using ClassifierError::ClassifierError;
};

/// External classifier process died or could not be started.
class ProcessError : public ClassifierError {
 public:
  using ClassifierError::ClassifierError;
};

}  // namespace adjfree
