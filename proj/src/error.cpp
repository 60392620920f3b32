#include "cogload/error.hpp"

#include <cstdint>

namespace cogload {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::UnknownSite: return "UnknownSite";
    case Errc::Io: return "IoError";
    case Errc::Format: return "FormatError";
    case Errc::Consistency: return "ConsistencyError";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::InvalidRate: return "InvalidRate";
    case Errc::RateMismatch: return "RateMismatch";
    case Errc::UnsupportedRate: return "UnsupportedRate";
    case Errc::ProviderFailure: return "ProviderFailure";
    case Errc::MissingEmbedding: return "MissingEmbedding";
    case Errc::ConnectFailure: return "ConnectFailure";
    case Errc::Timeout: return "Timeout";
    case Errc::Protocol: return "ProtocolError";
    case Errc::EmptyRegion: return "EmptyRegion";
    case Errc::NonFinite: return "NonFinite";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::ConstantInput: return "ConstantInput";
    case Errc::BadChannelIndex: return "BadChannelIndex";
    case Errc::BudgetExceeded: return "BudgetExceeded";
    case Errc::EmptyGroup: return "EmptyGroup";
    case Errc::TooFewParticipants: return "TooFewParticipants";
  }
  return "Unknown";
}

Error format_error(const std::string& file, std::uint64_t offset, const std::string& reason) {
  return Error(Errc::Format, file + " @" + std::to_string(offset) + ": " + reason);
}

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::InvalidConfig:
    case Errc::InvalidArgument:
    case Errc::InvalidRate:
    case Errc::UnsupportedRate:
    case Errc::TooFewParticipants:
      return 2;
    case Errc::NonFinite:
    case Errc::ConstantInput:
    case Errc::BudgetExceeded:
      return 4;
    case Errc::Protocol:
      return 5;
    default:
      return 3;
  }
}

}  // namespace cogload
