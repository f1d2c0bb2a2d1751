#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace radp {

// Stable error taxonomy. The category names and exit codes are part of the
// command line contract and must not be renumbered.
enum class ErrorCategory {
    StateDivergence,
    NonFiniteDynamics,
    DimensionMismatch,
    RankDeficient,
    InadmissiblePolicy,
    EmptyInterval,
    PEViolation,
    ScheduleExhausted,
    CompositionDomain,
    ConfigParse,
    ReplayMismatch,
};

std::string_view category_name(ErrorCategory category) noexcept;
int exit_code(ErrorCategory category) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& message);
    [[nodiscard]] ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

class StateDivergence : public Error {
public:
    StateDivergence(double time, double norm);
    [[nodiscard]] double time() const noexcept { return time_; }
    [[nodiscard]] double norm() const noexcept { return norm_; }

private:
    double time_;
    double norm_;
};

class NonFiniteDynamics : public Error {
public:
    explicit NonFiniteDynamics(const std::string& message)
        : Error(ErrorCategory::NonFiniteDynamics, message) {}
};

class DimensionMismatch : public Error {
public:
    DimensionMismatch(std::string_view what, long expected, long actual);
};

class RankDeficient : public Error {
public:
    RankDeficient(const std::string& message, double min_singular_value);
    [[nodiscard]] double min_singular_value() const noexcept { return min_sv_; }

private:
    double min_sv_;
};

class InadmissiblePolicy : public Error {
public:
    explicit InadmissiblePolicy(const std::string& message)
        : Error(ErrorCategory::InadmissiblePolicy, message) {}
};

class EmptyInterval : public Error {
public:
    explicit EmptyInterval(std::size_t interval);
};

class PEViolation : public Error {
public:
    PEViolation(double ratio, double threshold);
    [[nodiscard]] double ratio() const noexcept { return ratio_; }

private:
    double ratio_;
};

class ScheduleExhausted : public Error {
public:
    ScheduleExhausted(const std::string& message, double best_residual);
    [[nodiscard]] double best_residual() const noexcept { return best_; }

private:
    double best_;
};

class CompositionDomain : public Error {
public:
    explicit CompositionDomain(const std::string& message)
        : Error(ErrorCategory::CompositionDomain, message) {}
};

class ConfigParse : public Error {
public:
    explicit ConfigParse(const std::string& message) : Error(ErrorCategory::ConfigParse, message) {}
};

class ReplayMismatch : public Error {
public:
    explicit ReplayMismatch(const std::string& message) : Error(ErrorCategory::ReplayMismatch, message) {}
};

} // namespace radp
