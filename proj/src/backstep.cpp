#include "radp/backstep.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "radp/errors.hpp"

namespace radp {

Vector stack_xz(const Vector& x, double z) {
    Vector out(x.size() + 1);
    out << x, z;
    return out;
}

Vector BacksteppedState::augmented(const Vector& x, double z) const { return stack_xz(x, zeta(x, z)); }

double BacksteppedState::z_of(const Vector& augmented) const {
    const Eigen::Index n = augmented.size() - 1;
    return augmented[n] + xi(augmented.head(n));
}

double BacksteppedState::composite_value(const Vector& augmented) const {
    const Eigen::Index n = augmented.size() - 1;
    const double zeta = augmented[n];
    return value.evaluate(augmented.head(n)) + 0.5 * zeta * zeta;
}

std::vector<double> BacksteppedState::zeta_series(const ObservedTrajectory& data) const {
    if (!data.has_z()) throw std::invalid_argument("zeta_series: trajectory has no z channel");
    std::vector<double> out(data.samples());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = zeta(data.state(k), data.z[k]);
    return out;
}

PhaseOneResult phase_one(Plant& plant, const Approximant& u0, const Controller& collector,
                         const OnlinePIConfig& config, const Rho& rho, double epsilon) {
    if (!plant.has_z_channel()) throw std::invalid_argument("phase_one: plant has no z channel");
    const double horizon = config.interval * static_cast<double>(config.interval_count());
    PhaseOneResult out;
    out.run = learn_from_data(plant.run(collector, horizon), u0, config);
    out.xi = robust_redesign(out.run.policy(), rho, config.cost.control_weight, epsilon);
    return out;
}

Controller tracking_collector(const Approximant& u0, const ExplorationSignal& exploration, double gain) {
    return [u0, exploration, gain](const Vector& x, double z, double t) {
        return -gain * (z - u0.evaluate(x) - exploration(t));
    };
}

PhaseTwoRegression assemble_phase_two(const SampleWindow& window, const BasisSet& basis_f, const BasisSet& basis_g,
                                      const RobustPolicy& xi) {
    if (window.data == nullptr) throw std::invalid_argument("assemble_phase_two: window has no data");
    const ObservedTrajectory& d = *window.data;
    if (!d.has_z() || d.z_channel.size() != d.samples()) {
        throw std::invalid_argument("assemble_phase_two: trajectory has no z channel");
    }
    const auto n = d.x.rows();
    if (basis_f.dim() != n + 1) throw DimensionMismatch("psi basis", n + 1, basis_f.dim());
    if (basis_g.dim() != n) throw DimensionMismatch("phi basis", n, basis_g.dim());
    const int n3 = basis_f.size();
    const int n4 = basis_g.size();
    const auto rows = static_cast<Eigen::Index>(window.intervals());

    PhaseTwoRegression prob;
    prob.theta = Matrix::Zero(rows, n3 + n4);
    prob.target = Vector::Zero(rows);
    prob.basis_f = basis_f;
    prob.basis_g = basis_g;
    for (std::size_t k = 0; k < window.boundaries.size(); ++k) prob.instants.push_back(window.instant(k));

    const std::size_t first = window.boundaries.front();
    const std::size_t last = window.boundaries.back();
    std::vector<double> zeta(last + 1, 0.0);
    for (std::size_t j = first; j <= last; ++j) zeta[j] = d.z[j] - xi(d.state(j));

    Vector psi(n3);
    Vector phi(n4);
    for (Eigen::Index k = 0; k < rows; ++k) {
        const std::size_t a = window.boundaries[static_cast<std::size_t>(k)];
        const std::size_t b = window.boundaries[static_cast<std::size_t>(k) + 1];
        if (b <= a) throw EmptyInterval(static_cast<std::size_t>(k));
        Vector int_f = Vector::Zero(n3);
        Vector int_g = Vector::Zero(n4);
        double actuation = 0.0;
        for (std::size_t j = a; j <= b; ++j) {
            double wt = 0.0;
            if (j > a) wt += 0.5 * (d.time[j] - d.time[j - 1]);
            if (j < b) wt += 0.5 * (d.time[j + 1] - d.time[j]);
            const Vector x = d.state(j);
            const double delta = d.x_channel[j] - d.z[j];
            basis_f.values_into(stack_xz(x, d.z[j]), psi);
            basis_g.values_into(x, phi);
            int_f.noalias() += (wt * zeta[j]) * psi;
            int_g.noalias() += (wt * delta * zeta[j]) * phi;
            actuation += wt * d.z_channel[j] * zeta[j];
        }
        prob.theta.row(k).head(n3) = int_f.transpose();
        prob.theta.row(k).tail(n4) = int_g.transpose();
        prob.target[k] = 0.5 * zeta[b] * zeta[b] - 0.5 * zeta[a] * zeta[a] - actuation;
    }
    return prob;
}

PhaseTwoResult solve_phase_two(const PhaseTwoRegression& problem, const PEOptions& pe) {
    const Eigen::Index rows = problem.theta.rows();
    const Eigen::Index cols = problem.theta.cols();
    if (rows < cols) {
        throw std::invalid_argument(fmt::format("solve_phase_two: {} rows for {} unknowns", rows, cols));
    }
    const LeastSquaresResult ls = solve_least_squares(problem.theta, problem.target);
    PhaseTwoResult out;
    out.pe_ratio = excitation_level(problem.theta, ls.relative_min_sv);
    Eigen::JacobiSVD<Matrix> raw(problem.theta);
    const double smin = raw.singularValues()[raw.singularValues().size() - 1];
    out.min_singular_value = smin * smin / static_cast<double>(rows);
    if (!(out.pe_ratio >= pe.delta_relative)) throw PEViolation(out.pe_ratio, pe.delta_relative);

    const int n3 = problem.basis_f.size();
    const int n4 = problem.basis_g.size();
    out.f_hat = Approximant(problem.basis_f, ls.solution.head(n3));
    // the Delta columns carry -g1
    out.g_hat = Approximant(problem.basis_g, -ls.solution.tail(n4));
    out.residuals = ls.residuals;
    out.residual_rms = ls.rms;
    return out;
}

Rho rho_one(const Rho& rho) { return Rho::affine(2.0 * rho.c0(), rho.c1()); }

double BacksteppedPolicy::operator()(const Vector& x, double z) const {
    const double zeta = z - xi(x);
    const double sx = x.squaredNorm();
    const double p1 = rho_one(rho)(sx + zeta * zeta);
    const double px = rho(sx);
    const double pz = rho(zeta * zeta);
    const double g = g_hat.evaluate(x);
    const double eps2 = epsilon * epsilon;
    return -f_hat.evaluate(stack_xz(x, z)) + 2.0 * control_weight * u_next.evaluate(x) -
           0.25 * g * g * p1 * p1 * zeta - eps2 * zeta - 0.25 * p1 * p1 * zeta -
           eps2 * pz * pz * zeta / (2.0 * px * px);
}

Controller BacksteppedPolicy::controller() const {
    return [self = *this](const Vector& x, double z, double) { return self(x, z); };
}

BacksteppedPolicy backstepped_policy(const RobustPolicy& xi, const Approximant& f_hat, const Approximant& g_hat) {
    if (f_hat.dim() != xi.base.dim() + 1) throw DimensionMismatch("f1 estimate", xi.base.dim() + 1, f_hat.dim());
    if (g_hat.dim() != xi.base.dim()) throw DimensionMismatch("g1 estimate", xi.base.dim(), g_hat.dim());
    return {xi, f_hat, g_hat, xi.base, xi.rho, xi.epsilon, xi.control_weight};
}

ZetaDynamics zeta_dynamics(const SystemModel& model, const RobustPolicy& xi) {
    if (!model.has_z_channel || !model.f1) throw std::invalid_argument("zeta_dynamics: model has no z channel");
    ZetaDynamics out;
    out.f1_bar = [model, xi](const Vector& x, double z) {
        return model.f1(x, z) - xi.gradient(x).dot(model.drift(x) + model.input_gain(x) * z);
    };
    out.g1_bar = [model, xi](const Vector& x) { return xi.gradient(x).dot(model.input_gain(x)); };
    return out;
}

ScalarField redesign_error_unmatched(const ZetaDynamics& truth, const BacksteppedPolicy& policy,
                                     const ScalarField& u_next_true) {
    return [truth, policy, u_next_true](const Vector& aug) {
        const Eigen::Index n = aug.size() - 1;
        const Vector x = aug.head(n);
        const double zeta = aug[n];
        const double z = zeta + policy.xi(x);
        const double p1 = rho_one(policy.rho)(aug.squaredNorm());
        const double gb = truth.g1_bar(x);
        const double gh = policy.g_hat.evaluate(x);
        return -truth.f1_bar(x, z) + policy.f_hat.evaluate(stack_xz(x, z)) +
               2.0 * policy.control_weight * (u_next_true(x) - policy.u_next.evaluate(x)) -
               0.25 * (gb * gb - gh * gh) * p1 * p1 * zeta;
    };
}

ClassKFunction gamma_one(const Rho& rho, double epsilon) {
    if (!(epsilon > 0)) throw std::invalid_argument("gamma_one: epsilon must be positive");
    return ClassKFunction([rho, epsilon](double s) { return 0.5 * epsilon * rho(0.5 * s * s) * s; },
                          ClassKFunction::kUnbounded, GainKind::ClassKInfinity,
                          fmt::format("gamma1[eps={:g}, rho={}]", epsilon, rho.describe()));
}

ClassKFunction kappa8_envelope(const ScalarField& xi, int dim, double radius, std::size_t radii,
                               std::size_t directions) {
    if (!(radius > 0)) throw std::invalid_argument("kappa8_envelope: radius must be positive");
    if (radii < 2) throw std::invalid_argument("kappa8_envelope: need at least two radii");
    const auto dirs = sphere_directions(dim, directions);
    const auto ladder = gain_ladder(radius, radii);
    // one extra radius past the end so every node can look one step ahead
    std::vector<double> probe = ladder;
    probe.push_back(ladder.back() * ladder.back() / ladder[ladder.size() - 2]);
    std::vector<double> sphere_max(probe.size());
    for (std::size_t k = 0; k < probe.size(); ++k) {
        double mx = 0.0;
        for (const auto& d : dirs) mx = std::max(mx, std::abs(xi(probe[k] * d)));
        sphere_max[k] = mx;
    }
    // node k carries the running maximum up to the next radius, so the
    // interpolant stays above the sampled envelope between nodes
    std::vector<double> vals(ladder.size());
    double running = 0.0;
    for (std::size_t k = 0; k < ladder.size(); ++k) {
        running = std::max({running, sphere_max[k], sphere_max[k + 1]});
        vals[k] = running + 1e-12 * ladder[k];
    }
    std::vector<double> nodes{0.0};
    nodes.insert(nodes.end(), ladder.begin(), ladder.end());
    vals.insert(vals.begin(), 0.0);
    return ClassKFunction::piecewise_linear(nodes, vals, "kappa8");
}

ClassKFunction kappa9(const ClassKFunction& kappa6, const ClassKFunction& kappa7, const ClassKFunction& kappa8) {
    const ClassKFunction twice_k7 = kappa7.scaled_argument(2.0);
    return ClassKFunction::max_of({kappa6, kappa7.compose(kappa8.scaled_argument(2.0)),
                                   twice_k7.compose(kappa8), twice_k7});
}

SmallGainReport check_small_gain_unmatched(const ClassKFunction& gamma1, const ClassKFunction& kappa_tilde1,
                                           const ClassKFunction& kappa_tilde2, const ClassKFunction& kappa3,
                                           const ClassKFunction& lambda_lower, const ClassKFunction& alpha1_lower,
                                           const ClassKFunction& alpha1_upper, double s_max, std::size_t samples) {
    return check_small_gain_matched(gamma1, kappa_tilde1, kappa_tilde2, kappa3, lambda_lower, alpha1_lower,
                                    alpha1_upper, s_max, samples);
}

RoaEstimate estimate_roa_unmatched(ScalarField composite_value, ScalarField w_lyapunov, double d1,
                                   ClassKFunction sigma1) {
    return estimate_roa_matched(std::move(composite_value), std::move(w_lyapunov), d1, std::move(sigma1));
}

} // namespace radp
