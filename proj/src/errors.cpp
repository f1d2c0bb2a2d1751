#include "radp/errors.hpp"

#include <fmt/format.h>

namespace radp {

std::string_view category_name(ErrorCategory category) noexcept {
    switch (category) {
    case ErrorCategory::StateDivergence: return "StateDivergence";
    case ErrorCategory::NonFiniteDynamics: return "NonFiniteDynamics";
    case ErrorCategory::DimensionMismatch: return "DimensionMismatch";
    case ErrorCategory::RankDeficient: return "RankDeficient";
    case ErrorCategory::InadmissiblePolicy: return "InadmissiblePolicy";
    case ErrorCategory::EmptyInterval: return "EmptyInterval";
    case ErrorCategory::PEViolation: return "PEViolation";
    case ErrorCategory::ScheduleExhausted: return "ScheduleExhausted";
    case ErrorCategory::CompositionDomain: return "CompositionDomain";
    case ErrorCategory::ConfigParse: return "ConfigParse";
    case ErrorCategory::ReplayMismatch: return "ReplayMismatch";
    }
    return "Unknown";
}

int exit_code(ErrorCategory category) noexcept {
    switch (category) {
    case ErrorCategory::ConfigParse: return 2;
    case ErrorCategory::StateDivergence: return 3;
    case ErrorCategory::NonFiniteDynamics: return 4;
    case ErrorCategory::PEViolation: return 5;
    case ErrorCategory::RankDeficient: return 6;
    case ErrorCategory::InadmissiblePolicy: return 7;
    case ErrorCategory::ScheduleExhausted: return 8;
    case ErrorCategory::CompositionDomain: return 9;
    case ErrorCategory::EmptyInterval: return 10;
    case ErrorCategory::DimensionMismatch: return 11;
    case ErrorCategory::ReplayMismatch: return 12;
    }
    return 1;
}

Error::Error(ErrorCategory category, const std::string& message)
    : std::runtime_error(message), category_(category) {}

StateDivergence::StateDivergence(double time, double norm)
    : Error(ErrorCategory::StateDivergence,
            fmt::format("state norm {:.6g} exceeded the blow-up bound at t = {:.6g} s", norm, time)),
      time_(time), norm_(norm) {}

DimensionMismatch::DimensionMismatch(std::string_view what, long expected, long actual)
    : Error(ErrorCategory::DimensionMismatch,
            fmt::format("{}: expected dimension {}, got {}", what, expected, actual)) {}

RankDeficient::RankDeficient(const std::string& message, double min_singular_value)
    : Error(ErrorCategory::RankDeficient, message), min_sv_(min_singular_value) {}

EmptyInterval::EmptyInterval(std::size_t interval)
    : Error(ErrorCategory::EmptyInterval,
            fmt::format("sampling interval {} contains no dense samples", interval)) {}

PEViolation::PEViolation(double ratio, double threshold)
    : Error(ErrorCategory::PEViolation,
            fmt::format("persistent excitation check failed: relative min singular value {:.3e} < {:.3e}",
                        ratio, threshold)),
      ratio_(ratio) {}

ScheduleExhausted::ScheduleExhausted(const std::string& message, double best_residual)
    : Error(ErrorCategory::ScheduleExhausted, message), best_(best_residual) {}

} // namespace radp
