#include "radp/robust.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "radp/errors.hpp"

namespace radp {

namespace {

// Makes a nondecreasing table strictly increasing without moving it by more
// than a relative 1e-9; `upward` pushes later entries up, otherwise earlier
// entries are pulled down.
void strictify(std::vector<double>& v, bool upward) {
    const auto n = static_cast<double>(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) {
        const double frac = upward ? static_cast<double>(k + 1) / n : (n - static_cast<double>(k)) / n;
        v[k] *= upward ? 1.0 + 1e-9 * frac : 1.0 - 1e-9 * frac;
    }
}

} // namespace

Rho::Rho(double c0, double c1) : c0_(c0), c1_(c1) {
    if (!(c0 > 0) || !(c1 >= 0)) throw std::invalid_argument("Rho: need c0 > 0 and c1 >= 0");
}

std::string Rho::describe() const {
    return c1_ == 0.0 ? fmt::format("{:.17g}", c0_) : fmt::format("{:.17g} + {:.17g}*s", c0_, c1_);
}

bool Rho::valid(double s_max, std::size_t points) const {
    double prev = (*this)(0.0);
    if (!(prev > 0)) return false;
    for (double s : gain_ladder(s_max, points)) {
        const double v = (*this)(s);
        if (!(v > 0) || v < prev) return false;
        prev = v;
    }
    return true;
}

double RobustPolicy::gain_factor(const Vector& x) const {
    const double p = rho(x.squaredNorm());
    return 1.0 + 0.5 * control_weight * p * p;
}

double RobustPolicy::operator()(const Vector& x) const { return gain_factor(x) * base.evaluate(x); }

Vector RobustPolicy::gradient(const Vector& x) const {
    // d/dx [(1 + r/2 rho^2(|x|^2)) u(x)], rho' = c1 for the affine family
    const double s = x.squaredNorm();
    const double p = rho(s);
    return gain_factor(x) * base.gradient(x) + (2.0 * control_weight * p * rho.c1() * base.evaluate(x)) * x;
}

Controller RobustPolicy::controller() const {
    return [self = *this](const Vector& x, double, double) { return self(x); };
}

ClassKFunction gamma_from_rho(const Rho& rho, double epsilon) {
    if (!(epsilon > 0)) throw std::invalid_argument("gamma_from_rho: epsilon must be positive");
    return ClassKFunction([rho, epsilon](double s) { return 0.5 * epsilon * rho(s * s) * s; },
                          ClassKFunction::kUnbounded, GainKind::ClassKInfinity,
                          fmt::format("gamma[eps={:g}, rho={}]", epsilon, rho.describe()));
}

RobustPolicy robust_redesign(const Approximant& u_hat, const Rho& rho, double control_weight, double epsilon) {
    if (!(control_weight > 0)) throw std::invalid_argument("robust_redesign: r must be positive");
    if (std::abs(u_hat.evaluate(Vector::Zero(u_hat.dim()))) > 1e-12) {
        throw std::invalid_argument("robust_redesign: base policy must vanish at the origin");
    }
    return {u_hat, rho, control_weight, epsilon, gamma_from_rho(rho, epsilon)};
}

void SmallGainReport::write(std::ostream& os, const std::string& title) const {
    fmt::print(os, "# {}\n", title);
    fmt::print(os, "holds {}\nmargin {:.17g}\nrelative_margin {:.17g}\ns_max {:.17g}\n", holds ? "yes" : "no", margin,
               relative_margin, s_max);
    fmt::print(os, "{:>24} {:>24} {:>24} {:>24} {:>24}\n", "s", "gamma", "rhs", "kappa_direct", "kappa_chain");
    for (const auto& r : table) {
        fmt::print(os, "{:>24.17g} {:>24.17g} {:>24.17g} {:>24.17g} {:>24.17g}\n", r.s, r.gamma, r.rhs, r.kappa2,
                   r.chain);
    }
}

SmallGainReport check_small_gain_matched(const ClassKFunction& gamma, const ClassKFunction& kappa1,
                                         const ClassKFunction& kappa2, const ClassKFunction& kappa3,
                                         const ClassKFunction& lambda_lower, const ClassKFunction& alpha_lower,
                                         const ClassKFunction& alpha_upper, double s_max, std::size_t samples) {
    const ClassKFunction chain =
        compose_chain({kappa1, lambda_lower.inverse_function(), kappa3, alpha_lower.inverse_function(), alpha_upper});
    SmallGainReport rep;
    rep.s_max = s_max;
    rep.margin = std::numeric_limits<double>::infinity();
    rep.relative_margin = std::numeric_limits<double>::infinity();
    for (double s : gain_ladder(s_max, samples)) {
        GainRow row;
        row.s = s;
        row.gamma = gamma(s);
        row.kappa2 = kappa2(s);
        row.chain = chain(s);
        row.rhs = std::max(row.kappa2, row.chain);
        rep.margin = std::min(rep.margin, row.gamma - row.rhs);
        rep.relative_margin = std::min(rep.relative_margin, (row.gamma - row.rhs) / row.gamma);
        rep.table.push_back(row);
    }
    rep.holds = rep.margin > 0;
    return rep;
}

ScalarField redesign_error(const Approximant& u_hat, const Approximant& u_i, const Approximant& u_next,
                           const Rho& rho, double control_weight) {
    return [=](const Vector& x) {
        const double p = rho(x.squaredNorm());
        const double uh = u_hat.evaluate(x);
        return 0.5 * control_weight * p * p * (uh - u_next.evaluate(x)) + uh - u_i.evaluate(x);
    };
}

Envelope sphere_envelopes(const ScalarField& v, int dim, double radius, std::size_t radii, std::size_t directions) {
    if (!(radius > 0)) throw std::invalid_argument("sphere_envelopes: radius must be positive");
    const auto dirs = sphere_directions(dim, directions);
    const auto ladder = gain_ladder(radius, radii);
    std::vector<double> lo(ladder.size());
    std::vector<double> hi(ladder.size());
    for (std::size_t k = 0; k < ladder.size(); ++k) {
        double mn = std::numeric_limits<double>::infinity();
        double mx = 0.0;
        for (const auto& d : dirs) {
            const double val = v(ladder[k] * d);
            mn = std::min(mn, val);
            mx = std::max(mx, val);
        }
        if (!(mn > 0)) {
            throw CompositionDomain(fmt::format(
                "function is not positive definite: min {:.3e} on the sphere of radius {:.6g}", mn, ladder[k]));
        }
        lo[k] = mn;
        hi[k] = mx;
    }
    for (std::size_t k = ladder.size() - 1; k-- > 0;) lo[k] = std::min(lo[k], lo[k + 1]);
    for (std::size_t k = 1; k < ladder.size(); ++k) hi[k] = std::max(hi[k], hi[k - 1]);
    strictify(lo, false);
    strictify(hi, true);
    std::vector<double> nodes{0.0};
    nodes.insert(nodes.end(), ladder.begin(), ladder.end());
    lo.insert(lo.begin(), 0.0);
    hi.insert(hi.begin(), 0.0);
    return {ClassKFunction::piecewise_linear(nodes, lo, "alpha_lower"),
            ClassKFunction::piecewise_linear(nodes, hi, "alpha_upper"), radius};
}

ClassKFunction build_sigma(const ClassKFunction& chi2, const ClassKFunction& chi1, double v_max, std::size_t points) {
    const auto ladder = gain_ladder(v_max, points, 1e-6);
    std::vector<double> vals;
    vals.reserve(ladder.size());
    double running = 0.0;
    for (double v : ladder) {
        running = std::max(running, std::sqrt(chi2(v) * chi1.inverse(v)));
        vals.push_back(running);
    }
    strictify(vals, true);
    std::vector<double> nodes{0.0};
    nodes.insert(nodes.end(), ladder.begin(), ladder.end());
    vals.insert(vals.begin(), 0.0);
    return ClassKFunction::piecewise_linear(nodes, vals, "sigma");
}

LevelCertificate certify_level(const ScalarField& v, const ScalarField& error, const ClassKFunction& gamma, int dim,
                               double radius, double d_max, std::size_t ladder, std::size_t samples) {
    std::vector<Vector> pts;
    for (const auto& d : sphere_directions(dim, 64)) {
        for (double r : gain_ladder(radius, 60)) pts.push_back(r * d);
    }
    const Box box{Vector::Constant(dim, -radius), Vector::Constant(dim, radius)};
    for (auto& p : halton_points(box, samples)) pts.push_back(std::move(p));

    struct Sample {
        double value;
        double ratio;
    };
    std::vector<Sample> s;
    s.reserve(pts.size());
    double first_bad = std::numeric_limits<double>::infinity();
    for (const auto& x : pts) {
        const double nx = x.norm();
        if (nx == 0.0) continue;
        const double val = v(x);
        const double ratio = std::abs(error(x)) / gamma(nx);
        s.push_back({val, ratio});
        if (!(ratio < 1.0)) first_bad = std::min(first_bad, val);
    }
    LevelCertificate cert;
    for (double d : log_space(d_max * 1e-6, d_max, ladder)) {
        if (d < first_bad) cert.d = d;
    }
    for (const auto& smp : s) {
        if (smp.value > 0 && smp.value <= cert.d) {
            cert.worst_ratio = std::max(cert.worst_ratio, smp.ratio);
            ++cert.samples;
        }
    }
    return cert;
}

bool RoaEstimate::contains(const Vector& w, const Vector& x) const {
    if (!(d > 0)) return false;
    const double vx = value(x);
    if (vx > d) return false; // sigma is increasing, so sigma(V) <= sigma(d) iff V <= d
    return std::max(sigma(vx), w_lyapunov(w)) <= level();
}

RoaEstimate estimate_roa_matched(ScalarField value, ScalarField w_lyapunov, double d, ClassKFunction sigma) {
    if (!(d >= 0)) throw std::invalid_argument("estimate_roa_matched: d must be nonnegative");
    return {std::move(value), std::move(w_lyapunov), d, std::move(sigma)};
}

std::vector<Vector> level_set_boundary(const ScalarField& v, double d, int dim, double radius,
                                       std::size_t directions) {
    std::vector<Vector> out;
    for (const auto& dir : sphere_directions(dim, directions)) {
        double lo = 0.0;
        double hi = radius;
        if (v(hi * dir) <= d) {
            out.emplace_back(hi * dir);
            continue;
        }
        for (int it = 0; it < 80; ++it) {
            const double mid = 0.5 * (lo + hi);
            (v(mid * dir) <= d ? lo : hi) = mid;
        }
        out.emplace_back(lo * dir);
    }
    return out;
}

void write_roa_boundary(std::ostream& os, const std::vector<Vector>& x_boundary,
                        const std::vector<Vector>& w_boundary) {
    const Eigen::Index n = x_boundary.empty() ? 0 : x_boundary.front().size();
    const Eigen::Index p = w_boundary.empty() ? 0 : w_boundary.front().size();
    os << "part,index";
    for (Eigen::Index k = 0; k < std::max(n, p); ++k) os << ",c" << (k + 1);
    os << '\n';
    auto dump = [&os, n, p](const char* part, const std::vector<Vector>& pts) {
        for (std::size_t i = 0; i < pts.size(); ++i) {
            os << part << ',' << i;
            for (Eigen::Index k = 0; k < std::max(n, p); ++k) {
                os << ',';
                if (k < pts[i].size()) fmt::print(os, "{:.17g}", pts[i][k]);
            }
            os << '\n';
        }
    };
    dump("x", x_boundary);
    dump("w", w_boundary);
}

std::vector<std::pair<Vector, Vector>> sample_roa(const RoaEstimate& roa, int x_dim, double x_radius, int w_dim,
                                                  double w_radius, std::size_t count, std::size_t skip) {
    const int total = x_dim + w_dim;
    Box box{Vector(total), Vector(total)};
    box.lo << Vector::Constant(x_dim, -x_radius), Vector::Constant(w_dim, -w_radius);
    box.hi << Vector::Constant(x_dim, x_radius), Vector::Constant(w_dim, w_radius);
    std::vector<std::pair<Vector, Vector>> out;
    std::size_t next = skip;
    const std::size_t chunk = 4 * count + 64;
    for (int round = 0; round < 200 && out.size() < count; ++round) {
        for (const auto& s : halton_points(box, chunk, next)) {
            const Vector x = s.head(x_dim);
            const Vector w = s.tail(w_dim);
            if (roa.contains(w, x)) out.emplace_back(x, w);
            if (out.size() == count) break;
        }
        next += chunk;
    }
    return out;
}

std::optional<Rho> select_rho(const std::vector<double>& ladder,
                              const std::function<SmallGainReport(const Rho&)>& check, double min_relative_margin) {
    for (double c : ladder) {
        const Rho rho = Rho::constant(c);
        try {
            const SmallGainReport rep = check(rho);
            if (rep.holds && rep.relative_margin >= min_relative_margin) return rho;
        } catch (const CompositionDomain&) {
            continue;
        }
    }
    return std::nullopt;
}

DescentReport check_descent(const std::vector<double>& time, const std::vector<double>& value,
                            const std::vector<double>& threshold, const std::vector<double>& q0,
                            const std::vector<double>& envelope, double slack) {
    const std::size_t n = time.size();
    if (value.size() != n || threshold.size() != n || q0.size() != n || envelope.size() != n) {
        throw std::invalid_argument("check_descent: series lengths differ");
    }
    DescentReport rep;
    for (std::size_t k = 1; k + 1 < n; ++k) {
        if (value[k] < threshold[k]) continue;
        const double vdot = (value[k + 1] - value[k - 1]) / (time[k + 1] - time[k - 1]);
        const double excess = vdot + q0[k] - envelope[k];
        rep.worst_excess = std::max(rep.worst_excess, excess);
        ++rep.checked;
        if (excess > slack) rep.holds = false;
    }
    return rep;
}

} // namespace radp
