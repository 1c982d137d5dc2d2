#pragma once

#include <stdexcept>
#include <string>

namespace genrank {

// Base of every error raised by the library. Each subclass names one failure
// mode so callers can catch exactly what they are prepared to handle.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define GENRANK_DEFINE_ERROR(Name)          \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
  }

GENRANK_DEFINE_ERROR(SyntaxError);
GENRANK_DEFINE_ERROR(MissingNumber);
GENRANK_DEFINE_ERROR(NoAlternative);
GENRANK_DEFINE_ERROR(TooSmall);
GENRANK_DEFINE_ERROR(EmptyBank);
GENRANK_DEFINE_ERROR(FormatError);
GENRANK_DEFINE_ERROR(ParseError);
GENRANK_DEFINE_ERROR(DimensionMismatch);
GENRANK_DEFINE_ERROR(NonFinite);
GENRANK_DEFINE_ERROR(NoCandidate);
GENRANK_DEFINE_ERROR(ConfigError);
GENRANK_DEFINE_ERROR(CheckpointError);

#undef GENRANK_DEFINE_ERROR

}  // namespace genrank
