#include <doctest.h>

#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "oracles.hpp"
#include "radp/errors.hpp"
#include "radp/experiments.hpp"

using namespace radp;

namespace {

Vector vec2(double a, double b) { return (Vector(2) << a, b).finished(); }

Vector arm_full_field(const ArmModel& arm, const Vector& s, double u) {
    return arm_transformed_dynamics(arm, s[0], s.tail(2), u);
}

} // namespace

TEST_CASE("arm equilibrium and coordinate map") {
    const ArmModel arm;
    CHECK(arm_transformed_dynamics(arm, 0.0, vec2(0, 0), 0.0).norm() <= 1e-10);

    // x1 = -theta0 puts the arm at the horizontal
    const auto ph = arm_to_physical(arm, 0.3, vec2(-arm.theta0, 0.2));
    CHECK(std::abs(ph.theta) <= 1e-15);
    for (double w : {-1.0, 0.0, 0.7}) {
        for (const Vector& x : {vec2(-0.8, 3.5), vec2(0.1, -1.2), vec2(0, 0)}) {
            const auto back = arm_from_physical(arm, arm_to_physical(arm, w, x));
            CHECK(std::abs(back.first - w) <= 1e-14);
            CHECK((back.second - x).norm() <= 1e-14);
        }
    }
    // the physical equilibrium at theta0 holds the arm with n + T_m = mgl cos(theta0)
    const auto eq = arm_to_physical(arm, 0.0, vec2(0, 0));
    CHECK(arm_physical_dynamics(arm, eq, arm_muscle_input(arm, 0.0)).norm() <= 1e-12);

    ArmModel bad;
    bad.tau_n = 0.0;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("arm transformed model agrees with the physical model") {
    // d/dt of the transformed coordinates along the physical flow, via the
    // chain rule through a finite-difference Jacobian of the coordinate map
    for (double tau : {0.05, 0.1, 0.2}) {
        ArmModel arm;
        arm.tau_n = tau;
        const std::function<Vector(const Vector&)> to_transformed = [&arm](const Vector& q) {
            const auto [w, x] = arm_from_physical(arm, {q[0], q[1], q[2]});
            return Vector((Vector(3) << w, x[0], x[1]).finished());
        };
        for (const auto& s : halton_points(Box::symmetric((Vector(3) << 1.0, 0.8, 3.5).finished()), 20)) {
            const double u = 0.4 * s[1] - 0.2;
            const auto ph = arm_to_physical(arm, s[0], s.tail(2));
            const Vector q = (Vector(3) << ph.theta, ph.theta_dot, ph.n).finished();
            const Vector qdot = arm_physical_dynamics(arm, ph, arm_muscle_input(arm, u));
            const Vector want = oracle::fd_jacobian(to_transformed, q) * qdot;
            const Vector got = arm_transformed_dynamics(arm, s[0], s.tail(2), u);
            CHECK((got - want).norm() <= 1e-6 * (1 + want.norm()));
        }
    }
}

TEST_CASE("arm linearization against finite differences") {
    for (double tau : {0.05, 0.1, 0.2}) {
        ArmModel arm;
        arm.tau_n = tau;
        const std::function<Vector(const Vector&)> field = [&arm](const Vector& v) {
            return arm_full_field(arm, v.head(3), v[3]);
        };
        const Matrix fd = oracle::fd_jacobian(field, Vector::Zero(4), 1e-5);
        CHECK((fd - arm_linearization(arm)).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("arm problem declarations") {
    const ArmModel arm;
    const Problem p = build_arm_system(arm, vec2(-0.5, -0.5));
    CHECK(p.model.n == 2);
    CHECK(p.init.x[0] == doctest::Approx(-std::numbers::pi / 4));
    CHECK(p.init.w[0] == 1.0);
    CHECK(p.cost.state_cost(vec2(0.1, 2.0)) == doctest::Approx(5.0));
    CHECK(p.u0(vec2(1.0, 2.0)) == doctest::Approx(-1.5));
    // the learner-visible model plus the folded channel reproduce the full field
    for (const auto& s : halton_points(Box::symmetric((Vector(3) << 1.0, 0.8, 3.5).finished()), 30)) {
        const Vector x = s.tail(2);
        const Vector w = s.head(1);
        const double u = -0.3 * x[0];
        const Vector xdot = p.model.drift(x) + p.model.input_gain(x) * (u + p.uncertainty->matched_disturbance(w, x));
        const Vector full = arm_transformed_dynamics(arm, w[0], x, u);
        CHECK((xdot - full.tail(2)).norm() <= 1e-12);
        CHECK(std::abs(p.uncertainty->w_dynamics(w, x)[0] - full[0]) <= 1e-12);
    }
    const auto iss = check_iss_bounds(*p.uncertainty, p.w_region, p.x_region, 4000);
    CHECK(iss.ok());
    const auto cost = check_cost(p.cost, p.x_region);
    CHECK(cost.ok());
}

TEST_CASE("arm initial policies: stated gains are not stabilizing, stiffer gains are") {
    // closed-loop linearization of (w, x1, x2) under u = k1 x1 + k2 x2
    for (double tau : {0.05, 0.1, 0.2}) {
        ArmModel arm;
        arm.tau_n = tau;
        const Matrix j = arm_linearization(arm);
        auto max_real = [&j](double k1, double k2) {
            Matrix a = j.leftCols(3);
            a.col(1) += k1 * j.col(3);
            a.col(2) += k2 * j.col(3);
            return Eigen::EigenSolver<Matrix>(a).eigenvalues().real().maxCoeff();
        };
        CHECK(max_real(-0.5, -0.5) > 1.0);
        CHECK(max_real(-3.0, -0.5) < 0.0);
    }
}

TEST_CASE("linear benchmark builders") {
    Matrix a(2, 2), b(2, 1), k0(1, 2);
    a << 0, 1, 1, -1;
    b << 0, 1;
    k0 << 3, 2;
    HiddenLinear h;
    h.c = vec2(1, 0);
    const Problem p = build_robust_linear_problem("robust", a, b, Matrix::Identity(2, 2), 1.0, 0.8, k0, vec2(0.5, 0),
                                                  1.0, h);
    CHECK(p.u0(vec2(1, 1)) == doctest::Approx(-5.0));
    CHECK(p.uncertainty->matched_disturbance(Vector::Constant(1, 2.0), vec2(0, 0)) == doctest::Approx(1.0));
    CHECK(check_iss_bounds(*p.uncertainty, p.w_region, p.x_region, 3000).ok());
    CHECK_THROWS_AS(build_linear_problem("bad", a, b, Matrix::Identity(3, 3), 1.0, 0.1, k0, vec2(0, 0), 1.0),
                    DimensionMismatch);

    CascadeSpec cs;
    cs.c_x = 0.5;
    const Problem c = build_cascade_problem(cs);
    CHECK(c.model.has_z_channel);
    CHECK(c.model.f1(Vector::Constant(1, 2.0), 3.0) == doctest::Approx(6.0 + 1.0));
    CHECK(check_iss_bounds(*c.uncertainty, c.w_region, c.x_region, 2000).ok());
}

TEST_CASE("speed profile of a single bump") {
    std::vector<double> t, v;
    const double T = 2.0;
    for (int k = 0; k <= 2000; ++k) {
        t.push_back(k * 1e-3);
        v.push_back(std::sin(std::numbers::pi * t.back() / T));
    }
    const auto sp = speed_profile_analysis(t, v, T);
    CHECK(sp.peak_count == 1);
    CHECK(sp.symmetry_index <= 1e-9);
    CHECK(sp.peak_time == doctest::Approx(1.0));
}

TEST_CASE("speed profile counts separated bumps and ignores small ripples") {
    std::vector<double> t, two, ripple, flat;
    for (int k = 0; k <= 4000; ++k) {
        const double s = k * 1e-3;
        t.push_back(s);
        two.push_back(std::exp(-40 * (s - 1) * (s - 1)) + 0.8 * std::exp(-40 * (s - 3) * (s - 3)));
        ripple.push_back(std::exp(-4 * (s - 2) * (s - 2)) + 0.03 * std::exp(-400 * (s - 3.5) * (s - 3.5)));
        flat.push_back(std::min(1.0, std::sin(std::numbers::pi * s / 4) * 1.2));
    }
    CHECK(speed_profile_analysis(t, two, 4.0).peak_count == 2);
    CHECK(speed_profile_analysis(t, ripple, 4.0).peak_count == 1);
    CHECK(speed_profile_analysis(t, flat, 4.0).peak_count == 1);
    // the movement window truncates the second bump away
    CHECK(speed_profile_analysis(t, two, 2.0).peak_count == 1);
}

TEST_CASE("movement end from the position trace") {
    ObservedTrajectory tr;
    const std::size_t n = 8001;
    tr.x.resize(2, static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < n; ++k) {
        const double s = static_cast<double>(k) * 1e-3;
        tr.time.push_back(s);
        // x1 = -1 + (1 - cos(pi s / 2)) / 2 * 2 on [0, 2], then 0: reaches 0 at s = 2
        const double x1 = s < 2 ? -0.5 * (1 + std::cos(std::numbers::pi * s / 2)) : 0.0;
        const double x2 = s < 2 ? 0.25 * std::numbers::pi * std::sin(std::numbers::pi * s / 2) : 0.0;
        tr.x(0, static_cast<Eigen::Index>(k)) = x1;
        tr.x(1, static_cast<Eigen::Index>(k)) = x2;
    }
    const auto sp = speed_profile_analysis(tr);
    // |x1| < 0.02 first at 1 + cos(pi s / 2) < 0.04
    const double want = 2.0 / std::numbers::pi * std::acos(-0.96);
    CHECK(sp.movement_end == doctest::Approx(want).epsilon(1e-3));
    CHECK(sp.peak_count == 1);
    CHECK(sp.peak_time == doctest::Approx(1.0));
}

TEST_CASE("cost surface comparison") {
    const BasisSet b(2, {{2, 0}, {0, 2}});
    const Approximant v0(b, vec2(1.0, 2.0));
    const auto grid = tensor_grid(Box::symmetric(vec2(1.0, 1.0)), 51);
    REQUIRE(grid.size() == 51 * 51);
    const auto same = cost_surface_compare(v0, v0, grid);
    CHECK(same.reduction_fraction == 0.0);
    CHECK(same.max_ratio == doctest::Approx(1.0));

    std::vector<Vector> positive;
    for (const auto& x : grid) {
        if (x.norm() > 0) positive.push_back(x);
    }
    const auto half = cost_surface_compare(v0, v0.scaled(0.5), positive);
    CHECK(half.reduction_fraction == 1.0);
    CHECK(half.max_ratio == doctest::Approx(0.5));
}

TEST_CASE("tensor grid layout") {
    const auto g = tensor_grid({vec2(-1, 0), vec2(1, 2)}, 3);
    REQUIRE(g.size() == 9);
    CHECK((g.front() - vec2(-1, 0)).norm() == 0.0);
    CHECK((g[1] - vec2(-1, 1)).norm() == 0.0);
    CHECK((g.back() - vec2(1, 2)).norm() == 0.0);
}
