#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lens {

// Root of every error thrown by the library. Callers that only need a message
// can catch this; the subclasses exist so tests and the CLI can tell failure
// kinds apart.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t row, std::string column, const std::string& what)
      : Error("row " + std::to_string(row) + (column.empty() ? "" : ", column '" + column + "'") +
              ": " + what),
        row_(row),
        column_(std::move(column)) {}

  std::size_t row() const { return row_; }
  const std::string& column() const { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

#define LENS_DEFINE_ERROR(Name)          \
  class Name : public Error {            \
   public:                               \
    using Error::Error;                  \
  };

LENS_DEFINE_ERROR(DuplicateStreamId)
LENS_DEFINE_ERROR(EndBeforeStart)
LENS_DEFINE_ERROR(StrictModeViolation)
LENS_DEFINE_ERROR(InvalidPanel)
LENS_DEFINE_ERROR(CacheError)
LENS_DEFINE_ERROR(EmptyWindow)
LENS_DEFINE_ERROR(EmptyStream)
LENS_DEFINE_ERROR(EmptyInput)
LENS_DEFINE_ERROR(LengthMismatch)
LENS_DEFINE_ERROR(DegenerateInput)
LENS_DEFINE_ERROR(InsufficientClasses)
LENS_DEFINE_ERROR(NoEligibleStreams)
LENS_DEFINE_ERROR(MissingComponent)
LENS_DEFINE_ERROR(ConfigInvalid)
LENS_DEFINE_ERROR(NoDefinedCells)
LENS_DEFINE_ERROR(MissingResult)
LENS_DEFINE_ERROR(UsageError)

#undef LENS_DEFINE_ERROR

}  // namespace lens
