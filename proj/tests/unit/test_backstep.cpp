#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "radp/backstep.hpp"
#include "radp/errors.hpp"

using namespace radp;

namespace {

Vector v1(double x) { return Vector::Constant(1, x); }

// xi(x) = x, built as a robust redesign of (2/3) x with rho = 1, r = 1.
RobustPolicy unit_xi() {
    return robust_redesign({make_polynomial_basis(1, 1), Vector::Constant(1, 2.0 / 3.0)}, Rho::constant(1.0), 1.0,
                           0.5);
}

// Scalar cascade with f = -3x, g = 1, f1 = x z - 3x + z. Under xi(x) = x the
// zeta-subsystem has f1_bar = x z and g1_bar = 1 by construction.
SystemModel synthetic_cascade() {
    SystemModel m;
    m.n = 1;
    m.drift = [](const Vector& x) { return Vector(-3.0 * x); };
    m.input_gain = [](const Vector&) { return v1(1.0); };
    m.has_z_channel = true;
    m.f1 = [](const Vector& x, double z) { return x[0] * z - 3.0 * x[0] + z; };
    m.name = "synthetic cascade";
    return m;
}

UncertaintyModel synthetic_uncertainty() {
    UncertaintyModel u;
    u.p = 1;
    u.w_dynamics = [](const Vector& w, const Vector& x) { return Vector(-w + x); };
    u.matched_disturbance = [](const Vector& w, const Vector&) { return w[0]; };
    u.unmatched_disturbance = [](const Vector& w, const Vector&, double) { return 0.5 * w[0]; };
    return u;
}

BasisSet psi_basis() { return make_polynomial_basis(2, 2); }          // x, z, x^2, x z, z^2
BasisSet phi_basis() { return make_polynomial_basis(1, 1, false, true); } // 1, x

int index_of(const BasisSet& b, const MultiIndex& a) {
    for (int j = 0; j < b.size(); ++j) {
        if (b.indices()[static_cast<std::size_t>(j)] == a) return j;
    }
    return -1;
}

SimulationRecord synthetic_record(double step, double horizon) {
    const RobustPolicy xi = unit_xi();
    const ExplorationSignal e(1.0, 7);
    const Controller u = [xi, e](const Vector& x, double z, double t) { return -2.0 * (z - xi(x)) + e(t); };
    IntegrationOptions opt;
    opt.step = step;
    opt.horizon = horizon;
    const auto unc = synthetic_uncertainty();
    return integrate(synthetic_cascade(), &unc, u, {v1(0.5), 0.0, v1(0.3)}, opt);
}

ObservedTrajectory constant_record(double x, double z, double x_channel, double z_channel, double duration,
                                   double h) {
    ObservedTrajectory d;
    const auto n = static_cast<std::size_t>(std::lround(duration / h)) + 1;
    d.x = Matrix::Constant(1, static_cast<Eigen::Index>(n), x);
    for (std::size_t k = 0; k < n; ++k) d.time.push_back(static_cast<double>(k) * h);
    d.z.assign(n, z);
    d.u.assign(n, z_channel);
    d.x_channel.assign(n, x_channel);
    d.z_channel.assign(n, z_channel);
    return d;
}

} // namespace

TEST_CASE("backstepped state coordinates") {
    const BacksteppedState st{unit_xi(), {BasisSet(1, {{2}}), Vector::Constant(1, 0.8)}};
    for (double x : {-1.3, 0.0, 0.4, 2.0}) {
        for (double z : {-0.7, 0.0, 1.1}) {
            const Vector aug = st.augmented(v1(x), z);
            CHECK(std::abs(aug[1] - (z - x)) <= 1e-12);
            CHECK(std::abs(st.z_of(aug) - z) <= 1e-12);
            const double u = st.composite_value(aug);
            CHECK(u == doctest::Approx(0.8 * x * x + 0.5 * (z - x) * (z - x)));
            if (aug.norm() > 0) CHECK(u > 0);
        }
    }
    CHECK(st.composite_value(Vector::Zero(2)) == 0.0);
}

TEST_CASE("robust policy gradient against central differences") {
    const auto base = Approximant(make_polynomial_basis(2, 2), (Vector(5) << -1.0, 0.4, 0.2, -0.3, 0.1).finished());
    const auto xi = robust_redesign(base, Rho::affine(1.5, 0.7), 2.0);
    const Box box = Box::symmetric(Vector::Constant(2, 1.5));
    for (const auto& x : halton_points(box, 100)) {
        const Vector fd = oracle::fd_gradient([&xi](const Vector& y) { return xi(y); }, x);
        CHECK(oracle::rel_err(xi.gradient(x), fd) <= 1e-6);
    }
}

TEST_CASE("zeta dynamics of the synthetic cascade") {
    const auto truth = zeta_dynamics(synthetic_cascade(), unit_xi());
    for (double x : {-1.0, 0.3, 2.0}) {
        for (double z : {-0.5, 0.0, 1.5}) CHECK(truth.f1_bar(v1(x), z) == doctest::Approx(x * z).epsilon(1e-12));
        CHECK(truth.g1_bar(v1(x)) == doctest::Approx(1.0));
    }
}

TEST_CASE("phase-two rows vanish when zeta is zero") {
    const RobustPolicy xi = unit_xi();
    const auto d = constant_record(0.4, xi(v1(0.4)), 0.9, -0.3, 1.0, 1e-3);
    const auto win = make_window(d, 0.1, 10);
    const auto prob = assemble_phase_two(win, psi_basis(), phi_basis(), xi);
    CHECK(prob.theta.isZero(0.0));
    CHECK(prob.target.isZero(0.0));
    CHECK(prob.instants.size() == 11);
}

TEST_CASE("phase-two column layout and constant rows") {
    const RobustPolicy xi = unit_xi();
    // x = 0.4, z = 1, zeta = 0.6, Delta = 0.5, u + Delta1 = -0.3, interval 0.1
    const auto d = constant_record(0.4, 1.0, 1.5, -0.3, 1.0, 1e-3);
    const auto win = make_window(d, 0.1, 10);
    const auto psi = psi_basis();
    const auto phi = phi_basis();
    const auto prob = assemble_phase_two(win, psi, phi, xi);
    REQUIRE(prob.theta.cols() == psi.size() + phi.size());
    const Vector pv = psi.values(stack_xz(v1(0.4), 1.0));
    for (int j = 0; j < psi.size(); ++j) CHECK(prob.theta(0, j) == doctest::Approx(0.1 * 0.6 * pv[j]));
    CHECK(prob.theta(0, psi.size()) == doctest::Approx(0.1 * 0.5 * 0.6));
    CHECK(prob.theta(0, psi.size() + 1) == doctest::Approx(0.1 * 0.5 * 0.6 * 0.4));
    CHECK(prob.target[0] == doctest::Approx(0.1 * 0.3 * 0.6));
    // all intervals identical: no excitation
    CHECK_THROWS_AS((void)solve_phase_two(prob), PEViolation);
}

TEST_CASE("phase-two dimension checks") {
    const auto d = constant_record(0.4, 1.0, 1.5, -0.3, 1.0, 1e-3);
    const auto win = make_window(d, 0.1, 10);
    CHECK_THROWS_AS((void)assemble_phase_two(win, phi_basis(), phi_basis(), unit_xi()), DimensionMismatch);
    CHECK_THROWS_AS((void)assemble_phase_two(win, psi_basis(), psi_basis(), unit_xi()), DimensionMismatch);
}

TEST_CASE("phase-two identification recovers the synthetic zeta dynamics") {
    const auto rec = synthetic_record(2.5e-4, 8.0);
    const auto win = make_window(rec.observed, 0.1, 80);
    const auto psi = psi_basis();
    const auto phi = phi_basis();
    const auto sol = solve_phase_two(assemble_phase_two(win, psi, phi, unit_xi()));
    Vector wf = Vector::Zero(psi.size());
    wf[index_of(psi, {1, 1})] = 1.0;
    Vector wg = Vector::Zero(phi.size());
    wg[index_of(phi, {0})] = 1.0;
    CHECK(oracle::rel_err(sol.f_hat.weights(), wf) <= 1e-3);
    CHECK(oracle::rel_err(sol.g_hat.weights(), wg) <= 1e-3);
    // truth in the span and noise-free data: only quadrature error remains
    CHECK(sol.residual_rms <= 1e-8);
    CHECK(sol.pe_ratio >= 1e-6);
}

TEST_CASE("phase-two residual shrinks with the integration step") {
    const auto psi = psi_basis();
    const auto phi = phi_basis();
    double prev = 1.0;
    for (double h : {1e-3, 5e-4, 2.5e-4}) {
        const auto rec = synthetic_record(h, 8.0);
        const auto win = make_window(rec.observed, 0.1, 80);
        const auto sol = solve_phase_two(assemble_phase_two(win, psi, phi, unit_xi()));
        CHECK(sol.residual_rms < prev);
        prev = sol.residual_rms;
    }
}

TEST_CASE("nested psi bases never increase the phase-two residual") {
    const auto rec = synthetic_record(1e-3, 8.0);
    const auto win = make_window(rec.observed, 0.1, 80);
    const auto phi = phi_basis();
    const BasisSet small(2, {{1, 0}, {0, 1}});
    const BasisSet mid(2, {{1, 0}, {0, 1}, {2, 0}});
    const auto full = psi_basis();
    double prev = std::numeric_limits<double>::infinity();
    for (const auto* b : {&small, &mid, &full}) {
        const auto prob = assemble_phase_two(win, *b, phi, unit_xi());
        const double res = solve_least_squares(prob.theta, prob.target).rms;
        CHECK(res <= prev * (1 + 1e-12));
        prev = res;
    }
    CHECK(prev <= 1e-6);
}

TEST_CASE("backstepped policy term cancellation") {
    const RobustPolicy xi = unit_xi();
    const auto psi = psi_basis();
    Vector wf = Vector::Zero(psi.size());
    wf[index_of(psi, {1, 1})] = 1.0;
    wf[index_of(psi, {2, 0})] = -0.4;
    const Approximant f_hat(psi, wf);
    const Approximant g_hat(phi_basis(), (Vector(2) << 1.0, 0.2).finished());
    const auto pol = backstepped_policy(xi, f_hat, g_hat);
    CHECK(pol(v1(0.0), 0.0) == 0.0);
    for (double x : {-1.2, 0.3, 0.9}) {
        const double z = xi(v1(x));
        CHECK(pol(v1(x), z) == doctest::Approx(-f_hat(stack_xz(v1(x), z)) + 2.0 * xi.base(v1(x))));
    }
    // full formula at one point, written out by hand
    const double x = 0.5, z = -0.2, zeta = z - x, eps2 = 0.25;
    const double p1 = 2.0, px = 1.0, pz = 1.0, g = 1.1;
    const double want = -(x * z - 0.4 * x * x) + 2.0 * (2.0 / 3.0) * x - g * g * p1 * p1 * zeta / 4 - eps2 * zeta -
                        p1 * p1 * zeta / 4 - eps2 * pz * pz * zeta / (2 * px * px);
    CHECK(pol(v1(x), z) == doctest::Approx(want).epsilon(1e-14));
    CHECK(rho_one(Rho::affine(1.5, 0.3))(4.0) == doctest::Approx(2.0 * (1.5 + 0.3 * 2.0)));
}

TEST_CASE("unmatched redesign error") {
    const RobustPolicy xi = unit_xi();
    const auto truth = zeta_dynamics(synthetic_cascade(), xi);
    const auto psi = psi_basis();
    Vector wf = Vector::Zero(psi.size());
    wf[index_of(psi, {1, 1})] = 1.0;
    const Approximant g_hat(phi_basis(), (Vector(2) << 1.0, 0.0).finished());
    const ScalarField u_next = [&xi](const Vector& x) { return xi.base(x); };

    const auto exact = redesign_error_unmatched(truth, backstepped_policy(xi, {psi, wf}, g_hat), u_next);
    const auto shifted_basis = make_polynomial_basis(2, 2, false, true);
    Vector ws = Vector::Zero(shifted_basis.size());
    ws[index_of(shifted_basis, {1, 1})] = 1.0;
    ws[index_of(shifted_basis, {0, 0})] = 0.3;
    const auto shifted = redesign_error_unmatched(truth, backstepped_policy(xi, {shifted_basis, ws}, g_hat), u_next);
    for (const auto& p : halton_points(Box::symmetric(Vector::Constant(2, 2.0)), 50)) {
        CHECK(std::abs(exact(p)) <= 1e-12);
        CHECK(shifted(p) == doctest::Approx(0.3));
    }
}

TEST_CASE("gamma1 and kappa8") {
    CHECK(gamma_one(Rho::affine(1.0, 2.0), 0.5)(2.0) == doctest::Approx(0.5 * 0.5 * (1.0 + 2.0 * 2.0) * 2.0));
    const auto xi = robust_redesign({make_polynomial_basis(2, 1), (Vector(2) << -1.0, -0.5).finished()},
                                    Rho::constant(1.0), 1.0);
    const ScalarField f = [&xi](const Vector& x) { return xi(x); };
    const auto k8 = kappa8_envelope(f, 2, 4.0);
    CHECK(k8.validate(4.0).ok());
    // |xi| <= 1.5 * sqrt(1.25) |x|, attained along (2, 1)/sqrt(5)
    const double slope = 1.5 * std::sqrt(1.25);
    for (double s : {0.01, 0.5, 2.0, 4.0}) {
        CHECK(k8(s) <= slope * s * 1.05); // one ladder step of look-ahead
        CHECK(k8(s) >= 0.99 * slope * s);
    }
    for (const auto& x : halton_points(Box::symmetric(Vector::Constant(2, 2.5)), 500)) {
        if (x.norm() <= 4.0) CHECK(std::abs(f(x)) <= k8(x.norm()) * (1 + 1e-9));
    }
}

TEST_CASE("kappa9 takes the largest branch") {
    const auto k8 = ClassKFunction::piecewise_linear({0.0, 10.0}, {0.0, 30.0}); // 3s
    const auto k9 = kappa9(ClassKFunction::linear(1.0), ClassKFunction::linear(2.0), k8);
    CHECK(k9.domain_max() == doctest::Approx(5.0));
    // max{s, 2 * 3 * 2s, 2 * 2 * 3s, 2 * 2s} = 12 s
    CHECK(k9(1.5) == doctest::Approx(18.0));
    const auto k9b = kappa9(ClassKFunction::linear(50.0), ClassKFunction::linear(2.0), k8);
    CHECK(k9b(1.0) == doctest::Approx(50.0));
}

TEST_CASE("unmatched small-gain check") {
    const auto id = ClassKFunction::identity();
    const auto k8 = ClassKFunction::linear(0.5);
    const auto kt1 = ClassKFunction::max_of({id, ClassKFunction::linear(0.5)});
    const auto kt2 = ClassKFunction::max_of({id, kappa9(id, ClassKFunction::linear(0.1), k8)});
    const auto ok = check_small_gain_unmatched(ClassKFunction::linear(2.0), kt1, kt2, id, id, id, id, 10.0);
    CHECK(ok.holds);
    CHECK(ok.relative_margin == doctest::Approx(0.5));
    const auto big = ClassKFunction::max_of({id, kappa9(id, ClassKFunction::linear(5.0), k8)});
    const auto bad = check_small_gain_unmatched(ClassKFunction::linear(2.0), kt1, big, id, id, id, id, 10.0);
    CHECK_FALSE(bad.holds);
    CHECK(bad.margin < 0);
}

TEST_CASE("unmatched region of attraction estimate") {
    const BacksteppedState st{unit_xi(), {BasisSet(1, {{2}}), Vector::Constant(1, 1.0)}};
    const ScalarField u = [st](const Vector& aug) { return st.composite_value(aug); };
    const ScalarField w = [](const Vector& v) { return 0.5 * v.squaredNorm(); };
    const auto roa = estimate_roa_unmatched(u, w, 1.0, ClassKFunction::identity());
    CHECK(roa.contains(v1(1.0), (Vector(2) << 0.5, 0.5).finished()));
    CHECK_FALSE(roa.contains(v1(1.5), (Vector(2) << 0.5, 0.5).finished()));
    CHECK_FALSE(roa.contains(v1(0.0), (Vector(2) << 1.0, 0.1).finished()));
    const auto none = estimate_roa_unmatched(u, w, 0.0, ClassKFunction::identity());
    CHECK_FALSE(none.contains(v1(0.0), (Vector(2) << 1e-6, 0.0).finished()));
}

TEST_CASE("phase one with z held at the policy reduces to pure evaluation") {
    const Approximant u0(make_polynomial_basis(1, 1), v1(-0.5));
    ObservedTrajectory d;
    const double h = 1e-3;
    for (int k = 0; k <= 1000; ++k) d.time.push_back(k * h);
    d.x.resize(1, 1001);
    for (int k = 0; k <= 1000; ++k) {
        const double x = std::exp(-1.5 * d.time[static_cast<std::size_t>(k)]);
        d.x(0, k) = x;
        d.z.push_back(u0(v1(x)));
        d.x_channel.push_back(d.z.back());
        d.u.push_back(0.0);
        d.z_channel.push_back(0.0);
    }
    const auto prob = assemble_regression(make_window(d, 0.1, 10), BasisSet(1, {{2}}), make_polynomial_basis(1, 1),
                                          u0, {[](const Vector& x) { return x.squaredNorm(); }, 1.0, 0.1});
    CHECK(prob.theta.col(1).isZero(0.0));
}

namespace {

// x' = -x + z + Delta, z' = u with Delta = 0; the x-subsystem is the scalar
// Riccati benchmark.
SimulatedPlant linear_cascade_plant() {
    SystemModel m;
    m.n = 1;
    m.drift = [](const Vector& x) { return Vector(-x); };
    m.input_gain = [](const Vector&) { return v1(1.0); };
    m.has_z_channel = true;
    m.f1 = [](const Vector&, double) { return 0.0; };
    IntegrationOptions opt;
    opt.step = 1e-3;
    return {m, std::nullopt, {v1(1.0), -0.5, {}}, opt};
}

OnlinePIConfig phase_one_config() {
    OnlinePIConfig cfg;
    cfg.basis_value = BasisSet(1, {{2}});
    cfg.basis_policy = make_polynomial_basis(1, 1);
    cfg.cost = {[](const Vector& x) { return x.squaredNorm(); }, 1.0, 0.1};
    cfg.intervals = 60;
    cfg.max_iter = 10;
    cfg.tol = 1e-9;
    return cfg;
}

} // namespace

TEST_CASE("phase one matches the Riccati gain of the x-subsystem") {
    auto plant = linear_cascade_plant();
    const Approximant u0(make_polynomial_basis(1, 1), v1(-0.5));
    const auto res = phase_one(plant, u0, tracking_collector(u0, ExplorationSignal(1.0, 3), 20.0),
                               phase_one_config(), Rho::constant(1.0), 0.5);
    const double p = std::sqrt(2.0) - 1.0;
    CHECK(oracle::rel_err(res.run.value().weights()[0], p) <= 1e-3);
    CHECK(oracle::rel_err(res.run.policy().weights()[0], -p) <= 1e-3);
    CHECK(res.xi(v1(1.0)) == doctest::Approx(1.5 * res.run.policy()(v1(1.0))));
}

TEST_CASE("phase one without excitation of the x-channel is flagged") {
    // z' = u with u = du0/dx (f + g z) keeps z on u0(x) when it starts there,
    // so v = z - u0(x) is rounding noise only
    auto plant = linear_cascade_plant();
    const Approximant u0(make_polynomial_basis(1, 1), v1(-0.5));
    const Controller hold = [](const Vector& x, double z, double) { return -0.5 * (-x[0] + z); };
    CHECK_THROWS_AS((void)phase_one(plant, u0, hold, phase_one_config(), Rho::constant(1.0), 0.5), PEViolation);
}

TEST_CASE("tracking lag alone excites phase one") {
    // with e = 0 the tracking collector still leaves z - u0(x) nonzero: the
    // closed loop has two modes, so x and z - u0(x) are not proportional
    auto plant = linear_cascade_plant();
    const Approximant u0(make_polynomial_basis(1, 1), v1(-0.5));
    auto cfg = phase_one_config();
    cfg.max_iter = 1;
    const auto res = phase_one(plant, u0, tracking_collector(u0, ExplorationSignal(0.0, 3), 20.0), cfg,
                               Rho::constant(1.0), 0.5);
    CHECK(res.run.iterations[0].step.pe_ratio > cfg.pe.delta_relative);
}
