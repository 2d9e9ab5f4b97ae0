#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hyqe {

/// Base of every error raised by the library. `kind()` is the stable,
/// machine-readable name used in CLI error lines and service responses.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "Error"; }
};

#define HYQE_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                     \
   public:                                                        \
    using Error::Error;                                           \
    const char* kind() const noexcept override { return #Name; } \
  }

HYQE_DEFINE_ERROR(DimensionError);
HYQE_DEFINE_ERROR(ZeroNormError);
HYQE_DEFINE_ERROR(InvalidInputError);
HYQE_DEFINE_ERROR(PreconditionError);
HYQE_DEFINE_ERROR(WindowExceededError);
HYQE_DEFINE_ERROR(DuplicateIdError);
HYQE_DEFINE_ERROR(EmptyEvaluationError);
HYQE_DEFINE_ERROR(ConfigError);

#undef HYQE_DEFINE_ERROR

class ProviderError : public Error {
 public:
  ProviderError(const std::string& what, bool retryable)
      : Error(what), retryable_(retryable) {}
  const char* kind() const noexcept override { return "ProviderError"; }
  bool retryable() const noexcept { return retryable_; }

 private:
  bool retryable_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line_no, const std::string& what)
      : Error(source + ":" + std::to_string(line_no) + ": " + what), line_no_(line_no) {}
  explicit ParseError(const std::string& what) : Error(what), line_no_(0) {}
  const char* kind() const noexcept override { return "ParseError"; }
  /// 1-based line number, 0 when the error is not tied to a line.
  std::size_t line_no() const noexcept { return line_no_; }

 private:
  std::size_t line_no_;
};

class CorruptRecordError : public Error {
 public:
  CorruptRecordError(std::string key_description, const std::string& what)
      : Error("corrupt cache record " + key_description + ": " + what),
        key_(std::move(key_description)) {}
  const char* kind() const noexcept override { return "CorruptRecordError"; }
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace hyqe
