#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace radp {

enum class GainKind {
    ClassK,           // continuous, strictly increasing, zero at zero
    ClassKInfinity,   // class K and unbounded
    PositiveDefinite, // zero at zero, positive elsewhere, no monotonicity required
};

struct GainValidation {
    bool zero_at_zero = false;
    bool strictly_increasing = false;
    bool inverse_roundtrip = false;
    double worst_inverse_error = 0.0; // relative
    [[nodiscard]] bool ok() const { return zero_at_zero && strictly_increasing && inverse_roundtrip; }
};

/// Scalar comparison function on [0, domain_max]. Inverses are computed by
/// bracketing and bisection, so any monotone forward map composes.
class ClassKFunction {
public:
    using Map = std::function<double(double)>;
    static constexpr double kUnbounded = std::numeric_limits<double>::infinity();

    ClassKFunction();
    ClassKFunction(Map forward, double domain_max = kUnbounded, GainKind kind = GainKind::ClassKInfinity,
                   std::string name = {});

    static ClassKFunction identity();
    static ClassKFunction linear(double slope);
    /// c * s^p
    static ClassKFunction power(double coefficient, double exponent);
    /// Interpolates (s_k, v_k); nodes must start at s = 0 with v = 0 and be
    /// strictly increasing in both coordinates. Beyond the last node the
    /// function is undefined (CompositionDomain).
    static ClassKFunction piecewise_linear(std::vector<double> nodes, std::vector<double> values,
                                           std::string name = {});
    /// Pointwise maximum of class K functions. Domain is the smallest domain.
    static ClassKFunction max_of(const std::vector<ClassKFunction>& parts);

    double operator()(double s) const;
    /// Solves f(s) = y. Throws CompositionDomain when y lies outside the range.
    [[nodiscard]] double inverse(double y) const;
    [[nodiscard]] ClassKFunction inverse_function() const;
    /// (*this) o inner
    /// this o inner, defined where inner lands inside this function's domain.
    [[nodiscard]] ClassKFunction compose(const ClassKFunction& inner) const;
    /// s -> f(c * s)
    [[nodiscard]] ClassKFunction scaled_argument(double c) const;

    [[nodiscard]] double domain_max() const { return domain_max_; }
    [[nodiscard]] GainKind kind() const { return kind_; }
    [[nodiscard]] const std::string& name() const { return name_; }
    [[nodiscard]] bool empty() const { return !forward_; }

    /// Checks f(0) = 0, strict increase and inverse round trip on a log ladder
    /// over (0, s_max].
    [[nodiscard]] GainValidation validate(double s_max, std::size_t points = 200) const;

private:
    Map forward_;
    double domain_max_ = kUnbounded;
    GainKind kind_ = GainKind::ClassKInfinity;
    std::string name_;
};

/// Left-to-right composition: compose_chain({a, b, c}) = a o b o c.
ClassKFunction compose_chain(const std::vector<ClassKFunction>& chain);

/// Log-spaced evaluation ladder on [s_max * lower_ratio, s_max].
std::vector<double> gain_ladder(double s_max, std::size_t points = 200, double lower_ratio = 1e-4);

} // namespace radp
