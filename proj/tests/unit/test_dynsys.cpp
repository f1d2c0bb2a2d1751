#include <doctest.h>

#include <cmath>

#include "radp/dynsys.hpp"
#include "radp/errors.hpp"

using namespace radp;

namespace {

SystemModel scalar(std::function<double(double)> f) {
    SystemModel m;
    m.n = 1;
    m.drift = [f](const Vector& x) { return Vector::Constant(1, f(x[0])); };
    m.input_gain = [](const Vector&) { return Vector::Ones(1); };
    return m;
}

Controller zero_control() {
    return [](const Vector&, double, double) { return 0.0; };
}

InitialState at(double x0) { return {Vector::Constant(1, x0), 0.0, {}}; }

// Damped pendulum-like closed loop used for the order study.
SystemModel smooth_plant() {
    SystemModel m;
    m.n = 2;
    m.drift = [](const Vector& x) {
        Vector d(2);
        d << x[1], -std::sin(x[0]) - 0.3 * x[1];
        return d;
    };
    m.input_gain = [](const Vector&) { return (Vector(2) << 0.0, 1.0).finished(); };
    return m;
}

} // namespace

TEST_CASE("linear decay matches the closed form") {
    IntegrationOptions opt;
    opt.horizon = 5.0;
    const auto rec = integrate(scalar([](double x) { return -x; }), zero_control(), at(1.0), opt);
    CHECK(std::abs(rec.observed.x(0, rec.observed.x.cols() - 1) - std::exp(-5.0)) <= 1e-8);
    CHECK(rec.observed.time.back() == doctest::Approx(5.0).epsilon(1e-14));
}

TEST_CASE("finite escape raises StateDivergence at the escape time") {
    // Analytic escape at t = 1/x0 = 0.5. The fixed-step solution lags the true
    // one, so the bound is first exceeded on the grid point right after 0.5.
    IntegrationOptions opt;
    opt.horizon = 1.0;
    try {
        integrate(scalar([](double x) { return x * x; }), zero_control(), at(2.0), opt);
        FAIL("expected divergence");
    } catch (const StateDivergence& e) {
        CHECK(e.time() <= 0.5 + opt.step + 1e-12);
        CHECK(e.time() >= 0.5 - opt.step);
        CHECK(e.category() == ErrorCategory::StateDivergence);
    }
}

TEST_CASE("non-finite dynamics are reported") {
    IntegrationOptions opt;
    opt.horizon = 0.1;
    CHECK_THROWS_AS(integrate(scalar([](double x) { return std::log(x - 5.0); }), zero_control(), at(1.0), opt),
                    NonFiniteDynamics);
}

TEST_CASE("invalid integration arguments") {
    IntegrationOptions opt;
    opt.step = 0.0;
    CHECK_THROWS(integrate(scalar([](double x) { return -x; }), zero_control(), at(1.0), opt));
    opt.step = 0.1;
    opt.horizon = 0.01;
    CHECK_THROWS(integrate(scalar([](double x) { return -x; }), zero_control(), at(1.0), opt));
    opt.horizon = 1.0;
    CHECK_THROWS(integrate(scalar([](double x) { return -x; }), zero_control(), at(NAN), opt));
}

TEST_CASE("RK4 step halving shows fourth order") {
    const auto plant = smooth_plant();
    const Controller ctrl = [](const Vector& x, double, double t) { return -0.5 * x[0] + 0.2 * std::sin(3 * t); };
    const InitialState init{(Vector(2) << 1.0, 0.0).finished(), 0.0, {}};
    auto terminal = [&](double h) {
        IntegrationOptions opt;
        opt.step = h;
        opt.horizon = 4.0;
        const auto rec = integrate(plant, ctrl, init, opt);
        return Vector(rec.observed.x.col(rec.observed.x.cols() - 1));
    };
    const Vector a = terminal(0.04), b = terminal(0.02), c = terminal(0.01);
    const double ratio = (a - b).norm() / (b - c).norm();
    CHECK(ratio >= 8.0);
    CHECK(ratio <= 32.0);
}

TEST_CASE("integration is bit-for-bit deterministic") {
    const auto plant = smooth_plant();
    const Controller ctrl = [](const Vector& x, double, double t) { return -x[1] + std::cos(7 * t); };
    const InitialState init{(Vector(2) << 0.3, -0.2).finished(), 0.0, {}};
    IntegrationOptions opt;
    opt.horizon = 2.0;
    const auto r1 = integrate(plant, ctrl, init, opt);
    const auto r2 = integrate(plant, ctrl, init, opt);
    CHECK(r1.observed.x == r2.observed.x);
    CHECK(r1.observed.u == r2.observed.u);
}

TEST_CASE("hidden subsystem reaches the learner only through the composite channel") {
    SystemModel m = scalar([](double x) { return -x; });
    UncertaintyModel unc;
    unc.p = 1;
    unc.w_dynamics = [](const Vector& w, const Vector&) { return Vector(-w); };
    unc.matched_disturbance = [](const Vector& w, const Vector&) { return 2.0 * w[0]; };
    const Controller ctrl = [](const Vector&, double, double) { return 0.25; };
    IntegrationOptions opt;
    opt.horizon = 1.0;
    const auto rec = integrate(m, &unc, ctrl, {Vector::Constant(1, 0.5), 0.0, Vector::Constant(1, 1.0)}, opt);
    for (std::size_t k = 0; k < rec.observed.samples(); k += 100) {
        const double w = rec.hidden_w(0, static_cast<Eigen::Index>(k));
        CHECK(w == doctest::Approx(std::exp(-rec.observed.time[k])).epsilon(1e-10));
        CHECK(rec.observed.x_channel[k] == doctest::Approx(0.25 + 2.0 * w));
        CHECK(rec.observed.u[k] == 0.25);
    }
}

TEST_CASE("lipschitz probe") {
    const Box unit{Vector::Constant(3, -1.0), Vector::Constant(3, 1.0)};
    CHECK(lipschitz_probe([](const Vector& x) { return x; }, unit, 64) == doctest::Approx(1.0).epsilon(1e-12));
    const Box wide{Vector::Constant(1, -2.0), Vector::Constant(1, 2.0)};
    const double q = lipschitz_probe([](const Vector& x) { return Vector(x.array().square()); }, wide, 400);
    CHECK(q <= 4.0 + 1e-9);
    CHECK(q >= 4.0 - 0.05);
    CHECK_THROWS_AS(lipschitz_probe([](const Vector& x) { return Vector(x.array().log()); }, wide, 10),
                    NonFiniteDynamics);
}
