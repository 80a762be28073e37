#pragma once

#include <stdexcept>
#include <string>

namespace inctrl {

/// Base for every error raised by the toolkit. `kind()` is a stable name
/// that tests and the CLI use to classify failures.
class Error : public std::runtime_error {
public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

private:
  std::string kind_;
};

#define INCTRL_DEFINE_ERROR(Name)                                    \
  class Name : public Error {                                        \
  public:                                                            \
    explicit Name(const std::string& what) : Error(#Name, what) {}   \
  };

// config / data
INCTRL_DEFINE_ERROR(ParseError)
INCTRL_DEFINE_ERROR(SchemaError)
INCTRL_DEFINE_ERROR(MissingFieldError)
INCTRL_DEFINE_ERROR(UnknownLabelError)
INCTRL_DEFINE_ERROR(DuplicateRecordId)
INCTRL_DEFINE_ERROR(EmptyCorpus)
INCTRL_DEFINE_ERROR(IoError)
INCTRL_DEFINE_ERROR(FormatError)

// embedding / retrieval
INCTRL_DEFINE_ERROR(EmptyTextError)
INCTRL_DEFINE_ERROR(DimensionMismatch)
INCTRL_DEFINE_ERROR(ZeroVectorError)
INCTRL_DEFINE_ERROR(ProviderUnavailable)
INCTRL_DEFINE_ERROR(ProviderMismatch)
INCTRL_DEFINE_ERROR(CacheCorruption)

// prompt / inference / metrics
INCTRL_DEFINE_ERROR(BudgetTooSmall)
INCTRL_DEFINE_ERROR(BackendError)
INCTRL_DEFINE_ERROR(PromptTooLong)
INCTRL_DEFINE_ERROR(EmptyContinuation)
INCTRL_DEFINE_ERROR(MissingPositiveClass)
INCTRL_DEFINE_ERROR(EmptyReference)

#undef INCTRL_DEFINE_ERROR

}  // namespace inctrl
