#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hatric {

class SimError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AlignmentError : public SimError {
 public:
  using SimError::SimError;
};

class AllocationError : public SimError {
 public:
  using SimError::SimError;
};

class MissingMappingError : public SimError {
 public:
  using SimError::SimError;
};

class ConfigError : public SimError {
 public:
  using SimError::SimError;
};

class FaultError : public SimError {
 public:
  using SimError::SimError;
};

// Raised by readers; `index` is the 1-based line number (text) or the
// 0-based record index (binary).
class ParseError : public SimError {
 public:
  ParseError(std::uint64_t index, const std::string& what)
      : SimError("record " + std::to_string(index) + ": " + what), index_(index) {}
  std::uint64_t index() const { return index_; }

 private:
  std::uint64_t index_;
};

}  // namespace hatric
