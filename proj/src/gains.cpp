#include "radp/gains.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include <fmt/format.h>

#include "radp/errors.hpp"
#include "radp/numerics.hpp"

namespace radp {

ClassKFunction::ClassKFunction() = default;

ClassKFunction::ClassKFunction(Map forward, double domain_max, GainKind kind, std::string name)
    : forward_(std::move(forward)), domain_max_(domain_max), kind_(kind), name_(std::move(name)) {
    if (!(domain_max_ > 0)) throw std::invalid_argument("ClassKFunction: domain must be nonempty");
}

ClassKFunction ClassKFunction::identity() {
    return ClassKFunction([](double s) { return s; }, kUnbounded, GainKind::ClassKInfinity, "id");
}

ClassKFunction ClassKFunction::linear(double slope) {
    if (!(slope > 0)) throw std::invalid_argument("ClassKFunction::linear: slope must be positive");
    return ClassKFunction([slope](double s) { return slope * s; }, kUnbounded, GainKind::ClassKInfinity,
                          fmt::format("{:g}*s", slope));
}

ClassKFunction ClassKFunction::power(double coefficient, double exponent) {
    if (!(coefficient > 0) || !(exponent > 0)) throw std::invalid_argument("ClassKFunction::power: need c, p > 0");
    return ClassKFunction([coefficient, exponent](double s) { return coefficient * std::pow(s, exponent); },
                          kUnbounded, GainKind::ClassKInfinity, fmt::format("{:g}*s^{:g}", coefficient, exponent));
}

ClassKFunction ClassKFunction::piecewise_linear(std::vector<double> nodes, std::vector<double> values,
                                                std::string name) {
    if (nodes.size() < 2 || nodes.size() != values.size() || nodes.front() != 0.0 || values.front() != 0.0) {
        throw std::invalid_argument("piecewise_linear: need >= 2 nodes starting at (0, 0)");
    }
    for (std::size_t k = 1; k < nodes.size(); ++k) {
        if (!(nodes[k] > nodes[k - 1]) || !(values[k] > values[k - 1])) {
            throw std::invalid_argument("piecewise_linear: nodes and values must be strictly increasing");
        }
    }
    const double top = nodes.back();
    auto table = std::make_shared<const std::pair<std::vector<double>, std::vector<double>>>(std::move(nodes),
                                                                                               std::move(values));
    auto f = [table](double s) {
        const auto& [xs, ys] = *table;
        auto it = std::upper_bound(xs.begin(), xs.end(), s);
        if (it == xs.end()) return ys.back();
        const auto k = static_cast<std::size_t>(it - xs.begin());
        const double t = (s - xs[k - 1]) / (xs[k] - xs[k - 1]);
        return ys[k - 1] + t * (ys[k] - ys[k - 1]);
    };
    return ClassKFunction(std::move(f), top, GainKind::ClassK, std::move(name));
}

ClassKFunction ClassKFunction::max_of(const std::vector<ClassKFunction>& parts) {
    if (parts.empty()) throw std::invalid_argument("max_of: no parts");
    double dom = kUnbounded;
    bool unbounded = false;
    std::string name = "max{";
    for (std::size_t k = 0; k < parts.size(); ++k) {
        dom = std::min(dom, parts[k].domain_max());
        unbounded = unbounded || parts[k].kind() == GainKind::ClassKInfinity;
        name += (k ? "," : "") + parts[k].name();
    }
    name += "}";
    auto f = [parts](double s) {
        double m = 0.0;
        for (const auto& p : parts) m = std::max(m, p(s));
        return m;
    };
    return ClassKFunction(std::move(f), dom, unbounded ? GainKind::ClassKInfinity : GainKind::ClassK, name);
}

double ClassKFunction::operator()(double s) const {
    if (s < 0 || s > domain_max_ * (1 + 1e-12)) {
        throw CompositionDomain(fmt::format("gain '{}' evaluated at {:.6g} outside [0, {:.6g}]", name_, s,
                                            domain_max_));
    }
    return forward_(std::min(s, domain_max_));
}

double ClassKFunction::inverse(double y) const {
    if (y < 0) throw CompositionDomain(fmt::format("inverse of '{}' requested at negative value {:g}", name_, y));
    if (y == 0) return 0.0;
    double lo = 0.0;
    double hi = std::min(1.0, domain_max_);
    // Expand the bracket until f(hi) >= y.
    for (int k = 0; (*this)(hi) < y; ++k) {
        if (hi >= domain_max_ || k > 2000) {
            throw CompositionDomain(
                fmt::format("inverse of '{}' requested at {:.6g}, above its range on [0, {:.6g}]", name_, y, hi));
        }
        lo = hi;
        hi = std::min(2 * hi, domain_max_);
    }
    for (int k = 0; k < 300 && hi - lo > 1e-16 * hi; ++k) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if ((*this)(mid) < y) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

ClassKFunction ClassKFunction::inverse_function() const {
    const ClassKFunction self = *this;
    double dom = kUnbounded;
    if (std::isfinite(domain_max_)) dom = (*this)(domain_max_);
    return ClassKFunction([self](double y) { return self.inverse(y); }, dom, kind_, name_ + "^-1");
}

ClassKFunction ClassKFunction::compose(const ClassKFunction& inner) const {
    const ClassKFunction outer = *this;
    // pull a bounded outer domain back through inner
    double dom = inner.domain_max();
    if (std::isfinite(outer.domain_max())) {
        const bool inner_fits = std::isfinite(dom) && inner(dom) <= outer.domain_max();
        if (!inner_fits) {
            try {
                dom = std::min(dom, inner.inverse(outer.domain_max()));
            } catch (const CompositionDomain&) {
            }
        }
    }
    return ClassKFunction([outer, inner](double s) { return outer(inner(s)); }, dom,
                          (outer.kind() == GainKind::ClassKInfinity && inner.kind() == GainKind::ClassKInfinity)
                              ? GainKind::ClassKInfinity
                              : GainKind::ClassK,
                          outer.name() + " o " + inner.name());
}

ClassKFunction ClassKFunction::scaled_argument(double c) const {
    if (!(c > 0)) throw std::invalid_argument("scaled_argument: factor must be positive");
    const ClassKFunction self = *this;
    return ClassKFunction([self, c](double s) { return self(c * s); }, domain_max_ / c, kind_,
                          fmt::format("{}({:g}s)", name_, c));
}

GainValidation ClassKFunction::validate(double s_max, std::size_t points) const {
    GainValidation v;
    v.zero_at_zero = std::abs((*this)(0.0)) <= 1e-300;
    const auto ladder = log_space(s_max * 1e-6, s_max, points);
    v.strictly_increasing = (*this)(ladder.front()) > 0;
    double prev = (*this)(ladder.front());
    for (std::size_t k = 1; k < ladder.size(); ++k) {
        const double cur = (*this)(ladder[k]);
        if (!(cur > prev)) v.strictly_increasing = false;
        prev = cur;
    }
    v.inverse_roundtrip = true;
    for (double s : ladder) {
        const double back = inverse((*this)(s));
        const double err = std::abs(back - s) / s;
        v.worst_inverse_error = std::max(v.worst_inverse_error, err);
        if (err > 1e-9) v.inverse_roundtrip = false;
    }
    return v;
}

ClassKFunction compose_chain(const std::vector<ClassKFunction>& chain) {
    if (chain.empty()) throw std::invalid_argument("compose_chain: empty chain");
    ClassKFunction acc = chain.back();
    for (std::size_t k = chain.size() - 1; k-- > 0;) acc = chain[k].compose(acc);
    return acc;
}

std::vector<double> gain_ladder(double s_max, std::size_t points, double lower_ratio) {
    return log_space(s_max * lower_ratio, s_max, points);
}

} // namespace radp
