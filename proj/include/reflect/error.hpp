#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace reflect {

// Base of every error raised by the library. kind() is a stable identifier
// used by the CLI's machine-readable error line.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define REFLECT_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& message) : Error(#Name, message) {} \
  }

REFLECT_DEFINE_ERROR(ParseError);
REFLECT_DEFINE_ERROR(DivisionByZero);
REFLECT_DEFINE_ERROR(FormatError);
REFLECT_DEFINE_ERROR(GenerationExhausted);
REFLECT_DEFINE_ERROR(FileError);
REFLECT_DEFINE_ERROR(StageError);
REFLECT_DEFINE_ERROR(LengthError);
REFLECT_DEFINE_ERROR(SpanError);
REFLECT_DEFINE_ERROR(VocabError);
REFLECT_DEFINE_ERROR(AlignmentError);
REFLECT_DEFINE_ERROR(RangeError);
REFLECT_DEFINE_ERROR(ConfigError);
REFLECT_DEFINE_ERROR(TransportError);
REFLECT_DEFINE_ERROR(ProtocolError);
REFLECT_DEFINE_ERROR(AuthError);

#undef REFLECT_DEFINE_ERROR

// Errors tied to a line of a record-per-line file.
class LineError : public Error {
 public:
  LineError(std::string kind, std::size_t line, const std::string& reason)
      : Error(std::move(kind), "line " + std::to_string(line) + ": " + reason),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class RecordError : public LineError {
 public:
  RecordError(std::size_t line, const std::string& reason)
      : LineError("RecordError", line, reason) {}
};

class ValidationError : public LineError {
 public:
  ValidationError(std::size_t line, const std::string& reason)
      : LineError("ValidationError", line, reason) {}
};

}  // namespace reflect
