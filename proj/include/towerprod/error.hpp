#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace towerprod {

enum class ErrorKind {
    EmptyComponents,
    TruncationUnbounded,
    ThresholdNotMet,
    DomainError,
    TruncationTooLossy,
    AperiodicityViolated,
    MixingWindowNotFound,
    EnumerationBound,
    RunawayTrace,
    StateSpaceBound,
    FoldNotIntegrable,
    WindowTooNoisy,
    ZeroObservable,
    ConfigError,
};

std::string_view to_string(ErrorKind kind);

/// Every recoverable failure in the library is reported through this type.
/// `value()` carries the offending threshold / index when there is one.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message,
          std::optional<double> value = std::nullopt);

    ErrorKind kind() const noexcept { return kind_; }
    std::optional<double> value() const noexcept { return value_; }

private:
    ErrorKind kind_;
    std::optional<double> value_;
};

}  // namespace towerprod
