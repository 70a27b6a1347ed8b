#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cmg {

/// Bad argument, bad shape or a violated precondition. Maps to CLI exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Filesystem failure. Maps to CLI exit code 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed feature container; carries the byte offset where decoding failed.
class FormatError : public IoError {
 public:
  FormatError(const std::string& what, std::uint64_t offset);
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Non-finite values in a forward pass or loss. Maps to CLI exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A training stage was requested before the stage it depends on produced its artifacts.
class StageDependencyError : public ValidationError {
 public:
  StageDependencyError(const std::string& stage, const std::string& missing);
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace cmg
