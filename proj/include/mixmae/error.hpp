#pragma once

#include <stdexcept>
#include <string>

namespace mixmae {

enum class ErrorKind {
  kParameter,
  kDimension,
  kIndex,
  kConfig,
  kContract,
  kNumeric,
  kIo,
  kFormat,
  kIntegrity,
  kIngestion,
  kParse,
  kInternal,
};

const char* error_kind_name(ErrorKind kind);

// Every failure raised by the library carries a kind so the C boundary can
// translate it into a status code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

// Internal invariant check; active in every build type.
#define MIXMAE_ASSERT(cond, msg)                                         \
  do {                                                                   \
    if (!(cond)) ::mixmae::fail(::mixmae::ErrorKind::kInternal, (msg)); \
  } while (0)

}  // namespace mixmae
