#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rulesmith {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dataset and taxonomy ingestion failures. `line` is 1-based, 0 when the
// failure is not tied to a line.
class DatasetError : public Error {
 public:
  DatasetError(const std::string& message, std::size_t line = 0, std::string field = {})
      : Error(line ? "line " + std::to_string(line) + ": " + message : message),
        line_(line),
        field_(std::move(field)) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

class PredicateParseError : public Error {
 public:
  PredicateParseError(const std::string& message, std::size_t offset)
      : Error("offset " + std::to_string(offset) + ": " + message), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class InvalidRule : public Error {
 public:
  using Error::Error;
};

class RuleBaseError : public Error {
 public:
  using Error::Error;
};

}  // namespace rulesmith
