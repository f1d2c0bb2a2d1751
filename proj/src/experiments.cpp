#include "radp/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "radp/errors.hpp"

namespace radp {

namespace {

Box empty_box() { return {Vector(0), Vector(0)}; }

Approximant linear_policy(const Matrix& k0) {
    return {make_polynomial_basis(static_cast<int>(k0.cols()), 1), -Vector(k0.row(0).transpose())};
}

// Declared ISS bounds of w' = -a_w w + beta c^T x with W = w^2 / 2.
IssBounds hidden_linear_bounds(const HiddenLinear& h) {
    constexpr double tiny = 1e-6; // placeholder slope for channels that carry no signal
    const double k = std::abs(h.beta) * h.c.norm() / (h.a_w * (1.0 - h.mu));
    IssBounds b;
    b.kappa1 = ClassKFunction::linear(std::max(std::abs(h.delta), tiny));
    b.kappa2 = ClassKFunction::linear(tiny);
    b.kappa3 = ClassKFunction::power(0.5 * k * k, 2.0);
    b.kappa4 = [a = h.a_w, mu = h.mu](double s) { return a * mu * s * s; };
    b.lambda_lower = ClassKFunction::power(0.5, 2.0);
    b.lambda_upper = ClassKFunction::power(0.5, 2.0);
    b.W = [](const Vector& w) { return 0.5 * w.squaredNorm(); };
    b.W_gradient = [](const Vector& w) { return w; };
    b.kappa5 = ClassKFunction::linear(std::max(std::abs(h.delta1), tiny));
    b.kappa6 = ClassKFunction::linear(tiny);
    b.kappa7 = ClassKFunction::linear(tiny);
    return b;
}

void check_hidden(const HiddenLinear& h, Eigen::Index n) {
    if (!(h.a_w > 0)) throw std::invalid_argument("hidden subsystem: a_w must be positive");
    if (!(h.mu > 0 && h.mu < 1)) throw std::invalid_argument("hidden subsystem: mu must lie in (0, 1)");
    if (h.c.size() != n) throw DimensionMismatch("hidden coupling c", n, h.c.size());
    if (!(h.w_half_width > 0)) throw std::invalid_argument("hidden subsystem: w region must be nonempty");
}

} // namespace

void ArmModel::validate() const {
    for (double v : {m, l, g, inertia, tau_n, theta0}) {
        if (!(v > 0) || !std::isfinite(v)) throw std::invalid_argument("ArmModel: parameters must be positive");
    }
}

Vector arm_transformed_dynamics(const ArmModel& arm, double w, const Vector& x, double u) {
    const double s = std::sin(0.5 * x[0]) * std::sin(0.5 * x[0] + arm.theta0);
    Vector out(3);
    out[0] = -arm.a() * (w + arm.inertia * x[1]) - 2.0 * arm.mgl() * s;
    out[1] = x[1];
    out[2] = 2.0 * arm.mgl() / arm.inertia * s + (u + arm.inertia * x[1] + w) / arm.inertia;
    return out;
}

Problem build_arm_system(const ArmModel& arm, const Vector& u0_gains, const ArmGainOptions& gains, double epsilon) {
    arm.validate();
    if (u0_gains.size() != 2) throw DimensionMismatch("arm u0 gains", 2, u0_gains.size());
    if (!(gains.eta > 0) || !(gains.mu > 0 && gains.mu < 1)) {
        throw std::invalid_argument("build_arm_system: need eta > 0 and mu in (0, 1)");
    }
    Problem p;
    p.name = "arm";
    p.model.n = 2;
    p.model.name = "single-joint arm";
    p.model.drift = [arm](const Vector& x) {
        const double s = std::sin(0.5 * x[0]) * std::sin(0.5 * x[0] + arm.theta0);
        return Vector((Vector(2) << x[1], 2.0 * arm.mgl() / arm.inertia * s).finished());
    };
    p.model.input_gain = [arm](const Vector&) { return Vector((Vector(2) << 0.0, 1.0 / arm.inertia).finished()); };

    UncertaintyModel unc;
    unc.p = 1;
    unc.w_dynamics = [arm](const Vector& w, const Vector& x) {
        return Vector::Constant(1, arm_transformed_dynamics(arm, w[0], x, 0.0)[0]);
    };
    unc.matched_disturbance = [arm](const Vector& w, const Vector& x) { return w[0] + arm.inertia * x[1]; };

    // |a I x2 + 2mgl sin(x1/2) sin(.)| <= c_x |x| with c_x = |(mgl, a I)|
    const double cx = std::hypot(arm.mgl(), arm.a() * arm.inertia);
    const double k = cx / (arm.a() * (1.0 - gains.mu));
    IssBounds b;
    b.kappa1 = ClassKFunction::linear(1.0 + gains.eta);
    b.kappa2 = ClassKFunction::linear((1.0 + gains.eta) / gains.eta * arm.inertia);
    b.kappa3 = ClassKFunction::power(0.5 * k * k, 2.0);
    b.kappa4 = [a = arm.a(), mu = gains.mu](double s) { return a * mu * s * s; };
    b.lambda_lower = ClassKFunction::power(0.5, 2.0);
    b.lambda_upper = ClassKFunction::power(0.5, 2.0);
    b.W = [](const Vector& w) { return 0.5 * w.squaredNorm(); };
    b.W_gradient = [](const Vector& w) { return w; };
    unc.iss = b;
    p.uncertainty = unc;

    p.cost.state_cost = [](const Vector& x) { return 100.0 * x[0] * x[0] + x[1] * x[1]; };
    p.cost.control_weight = 1.0;
    p.cost.margin = epsilon;

    p.u0 = Approximant(make_polynomial_basis(2, 1), u0_gains);
    p.init = {(Vector(2) << -arm.theta0, 0.0).finished(), 0.0, Vector::Constant(1, 1.0)};
    p.x_region = Box::symmetric((Vector(2) << 0.8, 3.5).finished());
    p.w_region = Box::symmetric(Vector::Constant(1, 1.0));
    return p;
}

ArmPhysical arm_to_physical(const ArmModel& arm, double w, const Vector& x) {
    const double bias = arm.tau_n * arm.mgl() * std::cos(arm.theta0) / (arm.tau_n + 1.0);
    return {x[0] + arm.theta0, x[1], w + bias + arm.inertia * x[1]};
}

std::pair<double, Vector> arm_from_physical(const ArmModel& arm, const ArmPhysical& p) {
    const double bias = arm.tau_n * arm.mgl() * std::cos(arm.theta0) / (arm.tau_n + 1.0);
    return {p.n - bias - arm.inertia * p.theta_dot, (Vector(2) << p.theta - arm.theta0, p.theta_dot).finished()};
}

double arm_muscle_input(const ArmModel& arm, double u) {
    return u + arm.mgl() * std::cos(arm.theta0) / (arm.tau_n + 1.0);
}

Vector arm_physical_dynamics(const ArmModel& arm, const ArmPhysical& p, double muscle_input) {
    Vector out(3);
    out[0] = p.theta_dot;
    out[1] = (-arm.mgl() * std::cos(p.theta) + p.n + muscle_input) / arm.inertia;
    out[2] = -p.n / arm.tau_n + muscle_input;
    return out;
}

Matrix arm_linearization(const ArmModel& arm) {
    const double stiff = arm.mgl() * std::sin(arm.theta0);
    const double a = arm.a();
    const double in = arm.inertia;
    Matrix j(3, 4);
    j << -a, -stiff, -a * in, 0.0,   //
        0.0, 0.0, 1.0, 0.0,          //
        1.0 / in, stiff / in, 1.0, 1.0 / in;
    return j;
}

Problem build_linear_problem(const std::string& name, const Matrix& a, const Matrix& b, const Matrix& q, double r,
                             double epsilon, const Matrix& k0, const Vector& x0, double region_half_width) {
    const Eigen::Index n = a.rows();
    if (a.cols() != n) throw DimensionMismatch("A columns", n, a.cols());
    if (b.rows() != n || b.cols() != 1) throw DimensionMismatch("B rows", n, b.rows());
    if (q.rows() != n || q.cols() != n) throw DimensionMismatch("Q rows", n, q.rows());
    if (k0.rows() != 1 || k0.cols() != n) throw DimensionMismatch("K0 columns", n, k0.cols());
    if (x0.size() != n) throw DimensionMismatch("x0", n, x0.size());
    if (!(r > 0)) throw std::invalid_argument("build_linear_problem: r must be positive");
    Problem p;
    p.name = name;
    p.model.n = static_cast<int>(n);
    p.model.name = name;
    p.model.drift = [a](const Vector& x) { return Vector(a * x); };
    p.model.input_gain = [b](const Vector&) { return Vector(b.col(0)); };
    p.cost.state_cost = [q](const Vector& x) { return x.dot(q * x); };
    p.cost.control_weight = r;
    p.cost.margin = epsilon;
    p.u0 = linear_policy(k0);
    p.init = {x0, 0.0, {}};
    p.x_region = Box::symmetric(Vector::Constant(n, region_half_width));
    p.w_region = empty_box();
    return p;
}

Problem build_robust_linear_problem(const std::string& name, const Matrix& a, const Matrix& b, const Matrix& q,
                                    double r, double epsilon, const Matrix& k0, const Vector& x0,
                                    double region_half_width, const HiddenLinear& hidden) {
    Problem p = build_linear_problem(name, a, b, q, r, epsilon, k0, x0, region_half_width);
    check_hidden(hidden, a.rows());
    UncertaintyModel unc;
    unc.p = 1;
    unc.w_dynamics = [h = hidden](const Vector& w, const Vector& x) {
        return Vector::Constant(1, -h.a_w * w[0] + h.beta * h.c.dot(x));
    };
    unc.matched_disturbance = [d = hidden.delta](const Vector& w, const Vector&) { return d * w[0]; };
    unc.iss = hidden_linear_bounds(hidden);
    p.uncertainty = unc;
    p.init.w = Vector::Constant(1, hidden.w0);
    p.w_region = Box::symmetric(Vector::Constant(1, hidden.w_half_width));
    return p;
}

Problem build_cascade_problem(const CascadeSpec& spec) {
    HiddenLinear hidden = spec.hidden;
    if (hidden.c.size() == 0) hidden.c = Vector::Constant(1, 1.0);
    check_hidden(hidden, 1);
    if (!(spec.r > 0)) throw std::invalid_argument("build_cascade_problem: r must be positive");
    Problem p;
    p.name = "cascade";
    p.model.n = 1;
    p.model.name = "scalar cascade";
    p.model.drift = [a = spec.a](const Vector& x) { return Vector(a * x); };
    p.model.input_gain = [](const Vector&) { return Vector::Constant(1, 1.0); };
    p.model.has_z_channel = true;
    p.model.f1 = [s = spec](const Vector& x, double z) { return s.c_xz * x[0] * z + s.c_x * x[0] + s.c_z * z; };

    UncertaintyModel unc;
    unc.p = 1;
    unc.w_dynamics = [h = hidden](const Vector& w, const Vector& x) {
        return Vector::Constant(1, -h.a_w * w[0] + h.beta * h.c.dot(x));
    };
    unc.matched_disturbance = [d = hidden.delta](const Vector& w, const Vector&) { return d * w[0]; };
    unc.unmatched_disturbance = [d = hidden.delta1](const Vector& w, const Vector&, double) { return d * w[0]; };
    unc.iss = hidden_linear_bounds(hidden);
    p.uncertainty = unc;

    p.cost.state_cost = [](const Vector& x) { return x.squaredNorm(); };
    p.cost.control_weight = spec.r;
    p.cost.margin = spec.epsilon;
    p.u0 = Approximant(make_polynomial_basis(1, 1), Vector::Constant(1, -spec.k0));
    p.init = {Vector::Constant(1, spec.x0), spec.z0, Vector::Constant(1, hidden.w0)};
    p.x_region = Box::symmetric(Vector::Constant(1, spec.region_half_width));
    p.w_region = Box::symmetric(Vector::Constant(1, hidden.w_half_width));
    return p;
}

SpeedProfile speed_profile_analysis(const std::vector<double>& time, const std::vector<double>& speed,
                                    double movement_end) {
    if (time.size() != speed.size()) throw std::invalid_argument("speed_profile_analysis: length mismatch");
    SpeedProfile out;
    if (time.empty()) return out;
    std::size_t last = 0;
    while (last + 1 < time.size() && time[last + 1] <= movement_end) ++last;
    out.movement_end = time[last];
    std::vector<double> v(last + 1);
    for (std::size_t k = 0; k <= last; ++k) v[k] = std::abs(speed[k]);
    const auto top = std::max_element(v.begin(), v.end());
    out.peak_speed = *top;
    out.peak_time = time[static_cast<std::size_t>(top - v.begin())];
    const double duration = out.movement_end - time[0];
    if (duration > 0) out.symmetry_index = std::abs(out.peak_time - (time[0] + 0.5 * duration)) / duration;
    if (!(out.peak_speed > 0)) return out;

    const double floor = 0.05 * out.peak_speed;
    std::size_t k = 1;
    while (k + 1 <= last) {
        if (v[k] > v[k - 1]) {
            // walk across a plateau, then require a strict drop
            std::size_t j = k;
            while (j + 1 <= last && v[j + 1] == v[k]) ++j;
            if (j + 1 <= last && v[j + 1] < v[k] && v[k] > floor) ++out.peak_count;
            k = j + 1;
        } else {
            ++k;
        }
    }
    return out;
}

SpeedProfile speed_profile_analysis(const ObservedTrajectory& traj) {
    if (traj.x.rows() < 2 || traj.samples() == 0) {
        throw std::invalid_argument("speed_profile_analysis: need a trajectory with at least two states");
    }
    const double x10 = std::abs(traj.x(0, 0));
    const double t0 = traj.time.front();
    double end = std::min(t0 + 5.0, traj.time.back());
    for (std::size_t k = 0; k < traj.samples(); ++k) {
        if (std::abs(traj.x(0, static_cast<Eigen::Index>(k))) < 0.02 * x10) {
            end = std::min(end, traj.time[k]);
            break;
        }
    }
    std::vector<double> speed(traj.samples());
    for (std::size_t k = 0; k < speed.size(); ++k) speed[k] = traj.x(1, static_cast<Eigen::Index>(k));
    return speed_profile_analysis(traj.time, speed, end);
}

CostSurfaceComparison cost_surface_compare(const Approximant& initial, const Approximant& final_value,
                                           const std::vector<Vector>& grid) {
    CostSurfaceComparison out;
    out.points = grid.size();
    if (grid.empty()) return out;
    std::size_t reduced = 0;
    for (const auto& x : grid) {
        const double v0 = initial.evaluate(x);
        const double vf = final_value.evaluate(x);
        if (vf < v0) ++reduced;
        if (v0 > 0) out.max_ratio = std::max(out.max_ratio, vf / v0);
    }
    out.reduction_fraction = static_cast<double>(reduced) / static_cast<double>(grid.size());
    return out;
}

std::vector<Vector> tensor_grid(const Box& box, std::size_t per_axis) {
    if (per_axis < 2) throw std::invalid_argument("tensor_grid: need at least two points per axis");
    const int n = box.dim();
    std::size_t total = 1;
    for (int i = 0; i < n; ++i) total *= per_axis;
    std::vector<Vector> out;
    out.reserve(total);
    for (std::size_t idx = 0; idx < total; ++idx) {
        Vector x(n);
        std::size_t rem = idx;
        for (int i = n - 1; i >= 0; --i) {
            const auto k = static_cast<double>(rem % per_axis);
            rem /= per_axis;
            x[i] = box.lo[i] + (box.hi[i] - box.lo[i]) * k / static_cast<double>(per_axis - 1);
        }
        out.push_back(std::move(x));
    }
    return out;
}

} // namespace radp
