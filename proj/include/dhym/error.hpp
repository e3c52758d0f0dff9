#ifndef DHYM_ERROR_HPP
#define DHYM_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace dhym {

enum class ErrorKind {
  MetricNotPositive,
  BadOrder,
  DegenerateFrame,
  HypothesisViolated,
  DegreeOverflow,
  DegenerateVolume,
  NoSupercriticalPhase,
  UnknownCycle,
  ConeEscape,
  MaxIterations,
  PathBreak,
  BadMeasure,
  ResolutionError,
  SeparationViolated,
  TwistSignViolated,
  ConfigError,
  ParseError,
};

inline std::string_view to_string(ErrorKind kind)
{
  switch (kind) {
    case ErrorKind::MetricNotPositive: return "MetricNotPositive";
    case ErrorKind::BadOrder: return "BadOrder";
    case ErrorKind::DegenerateFrame: return "DegenerateFrame";
    case ErrorKind::HypothesisViolated: return "HypothesisViolated";
    case ErrorKind::DegreeOverflow: return "DegreeOverflow";
    case ErrorKind::DegenerateVolume: return "DegenerateVolume";
    case ErrorKind::NoSupercriticalPhase: return "NoSupercriticalPhase";
    case ErrorKind::UnknownCycle: return "UnknownCycle";
    case ErrorKind::ConeEscape: return "ConeEscape";
    case ErrorKind::MaxIterations: return "MaxIterations";
    case ErrorKind::PathBreak: return "PathBreak";
    case ErrorKind::BadMeasure: return "BadMeasure";
    case ErrorKind::ResolutionError: return "ResolutionError";
    case ErrorKind::SeparationViolated: return "SeparationViolated";
    case ErrorKind::TwistSignViolated: return "TwistSignViolated";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::ParseError: return "ParseError";
  }
  return "Unknown";
}

/// Single exception type for the library; `kind()` identifies the failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind)
  {
  }

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what)
{
  throw Error(kind, what);
}

}  // namespace dhym

#endif  // DHYM_ERROR_HPP
