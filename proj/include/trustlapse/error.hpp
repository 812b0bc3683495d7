#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace trustlapse {

enum class ErrorCode {
  EmptyClass,
  DimensionMismatch,
  SingularCovariance,
  UnknownMemberId,
  DuplicateMemberId,
  EmptyCoresetAfterMutation,
  NonFiniteInput,
  MissingLabel,
  InvalidConfig,
  EmptyWindow,
  OutOfOrderSeq,
  BadLength,
  OneClassOnly,
  NoPositives,
  UnmappedGroup,
  EmptyPool,
  LengthMismatch,
  BadMagic,
  TruncatedRecord,
  MalformedJson,
  MalformedModel,
  IoError,
  UnknownStream,
  StreamExists,
  UnknownVersion,
  BadRequest,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries a machine-readable code; the
/// CLI and the HTTP layer map codes to exit statuses and response codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace trustlapse
