// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fedprune {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid model, experiment or data-layout configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A caller passed an argument outside the operation's domain.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Malformed client submission (shape mismatch, wrong vector length).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Statistics are undefined, e.g. zero standard deviation.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int round, int batch)
      : Error(what + " (round " + std::to_string(round) + ", batch " + std::to_string(batch) + ")"),
        round_(round),
        batch_(batch) {}
  int round() const { return round_; }
  int batch() const { return batch_; }

 private:
  int round_;
  int batch_;
};

/// A runtime failure inside one experiment phase.
class PhaseError : public Error {
 public:
  PhaseError(const std::string& phase, const std::string& what) : Error(phase + ": " + what), phase_(phase) {}
  const std::string& phase() const { return phase_; }

 private:
  std::string phase_;
};

/// Binary file could not be decoded. Carries the byte offset where decoding failed.
class DecodeError : public Error {
 public:
  DecodeError(const std::string& what, std::uint64_t offset)
      : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

/// IDX magic number did not match the expected file kind.
class MagicError : public DecodeError {
 public:
  using DecodeError::DecodeError;
};

/// Payload shorter than the header promises.
class TruncationError : public DecodeError {
 public:
  TruncationError(const std::string& what, std::uint64_t expected, std::uint64_t actual)
      : DecodeError(what + ": expected " + std::to_string(expected) + " bytes, got " +
                        std::to_string(actual),
                    actual),
        expected_(expected),
        actual_(actual) {}
  std::uint64_t expected() const { return expected_; }
  std::uint64_t actual() const { return actual_; }

 private:
  std::uint64_t expected_;
  std::uint64_t actual_;
};

/// Image and label files disagree on the item count.
class CountMismatchError : public DecodeError {
 public:
  using DecodeError::DecodeError;
};

}  // namespace fedprune
