#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cogload {

// Every failure the library reports carries one of these codes. The CLI maps
// codes onto process exit statuses (see exit_code_for).
enum class Errc {
  UnknownSite,
  Io,
  Format,
  Consistency,
  InvalidConfig,
  InvalidArgument,
  InvalidRate,
  RateMismatch,
  UnsupportedRate,
  ProviderFailure,
  MissingEmbedding,
  ConnectFailure,
  Timeout,
  Protocol,
  EmptyRegion,
  NonFinite,
  DimensionMismatch,
  ConstantInput,
  BadChannelIndex,
  BudgetExceeded,
  EmptyGroup,
  TooFewParticipants,
};

std::string_view errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// FormatError(file, offset, reason)
Error format_error(const std::string& file, std::uint64_t offset, const std::string& reason);

// 2 = configuration, 3 = data / io, 4 = numeric, 5 = stream protocol.
int exit_code_for(Errc code);

}  // namespace cogload
