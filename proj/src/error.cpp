#include "towerprod/error.hpp"

namespace towerprod {

std::string_view to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::EmptyComponents: return "EmptyComponents";
    case ErrorKind::TruncationUnbounded: return "TruncationUnbounded";
    case ErrorKind::ThresholdNotMet: return "ThresholdNotMet";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::TruncationTooLossy: return "TruncationTooLossy";
    case ErrorKind::AperiodicityViolated: return "AperiodicityViolated";
    case ErrorKind::MixingWindowNotFound: return "MixingWindowNotFound";
    case ErrorKind::EnumerationBound: return "EnumerationBound";
    case ErrorKind::RunawayTrace: return "RunawayTrace";
    case ErrorKind::StateSpaceBound: return "StateSpaceBound";
    case ErrorKind::FoldNotIntegrable: return "FoldNotIntegrable";
    case ErrorKind::WindowTooNoisy: return "WindowTooNoisy";
    case ErrorKind::ZeroObservable: return "ZeroObservable";
    case ErrorKind::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message, std::optional<double> value)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message),
      kind_(kind),
      value_(value)
{
}

}  // namespace towerprod
