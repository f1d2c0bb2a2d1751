#include "radp/pi_oracle.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "radp/errors.hpp"

namespace radp {

std::vector<Vector> collocation_grid(const Box& omega, int basis_size, int factor) {
    const auto count = static_cast<std::size_t>(std::max(factor * basis_size, 16));
    return halton_points(omega, count);
}

void check_admissible(const SystemModel& model, const Approximant& policy, const std::vector<Vector>& grid,
                      const CollocationOptions& options) {
    const Controller ctrl = [&policy](const Vector& x, double, double) { return policy.evaluate(x); };
    IntegrationOptions io;
    io.step = options.probe_step;
    io.horizon = options.probe_horizon;
    const std::size_t count = std::min(options.probe_points, grid.size());
    for (std::size_t k = 0; k < count; ++k) {
        InitialState init{grid[k], 0.0, {}};
        double final_norm = 0.0;
        try {
            const SimulationRecord rec = integrate(model, ctrl, init, io);
            final_norm = rec.observed.x.col(rec.observed.x.cols() - 1).norm();
        } catch (const StateDivergence& e) {
            throw InadmissiblePolicy(fmt::format("probe from grid point {} diverged: {}", k, e.what()));
        }
        if (!(final_norm <= options.probe_ball)) {
            throw InadmissiblePolicy(fmt::format("probe from grid point {} ended at |x| = {:.3e} > {:.1e} after {} s",
                                                 k, final_norm, options.probe_ball, options.probe_horizon));
        }
    }
}

Approximant policy_evaluation_collocation(const SystemModel& model, const CostSpec& cost, const Approximant& policy,
                                          const BasisSet& basis_value, const std::vector<Vector>& grid,
                                          const CollocationOptions& options, double* residual_rms) {
    if (static_cast<int>(grid.size()) < basis_value.size()) {
        throw RankDeficient(fmt::format("collocation grid of {} points is smaller than the basis ({})", grid.size(),
                                        basis_value.size()),
                            0.0);
    }
    if (options.probe_admissibility) check_admissible(model, policy, grid, options);

    Matrix a(static_cast<Eigen::Index>(grid.size()), basis_value.size());
    Vector b(static_cast<Eigen::Index>(grid.size()));
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const Vector& x = grid[k];
        const double u = policy.evaluate(x);
        const Vector xdot = model.drift(x) + model.input_gain(x) * u;
        const auto row = static_cast<Eigen::Index>(k);
        a.row(row) = (basis_value.jacobian(x) * xdot).transpose();
        b[row] = -cost.running(x, u);
    }
    const LeastSquaresResult ls = solve_least_squares(a, b);
    if (ls.relative_min_sv < options.rank_tolerance) {
        throw RankDeficient(fmt::format("collocation matrix is rank deficient (relative min singular value {:.3e})",
                                        ls.relative_min_sv),
                            ls.relative_min_sv);
    }
    if (residual_rms) *residual_rms = ls.rms;
    return {basis_value, ls.solution};
}

Projection policy_improvement(const SystemModel& model, const CostSpec& cost, const Approximant& value,
                              const BasisSet& basis_policy, const std::vector<Vector>& grid) {
    std::vector<double> target;
    target.reserve(grid.size());
    for (const Vector& x : grid) {
        target.push_back(-0.5 / cost.control_weight * model.input_gain(x).dot(value.gradient(x)));
    }
    Projection p = project_onto(basis_policy, grid, target);
    if (p.relative_min_sv < 1e-12) {
        throw RankDeficient("policy basis is rank deficient on the collocation grid", p.relative_min_sv);
    }
    return p;
}

double hjb_residual_rms(const SystemModel& model, const CostSpec& cost, const Approximant& value,
                        const std::vector<Vector>& grid) {
    double acc = 0.0;
    for (const Vector& x : grid) {
        const Vector dv = value.gradient(x);
        const double dvg = dv.dot(model.input_gain(x));
        const double r = dv.dot(model.drift(x)) + cost.state_cost(x) - dvg * dvg / (4 * cost.control_weight);
        acc += r * r;
    }
    return std::sqrt(acc / static_cast<double>(grid.size()));
}

std::vector<PIState> run_policy_iteration(const SystemModel& model, const CostSpec& cost, const Approximant& u0,
                                          const BasisSet& basis_value, const BasisSet& basis_policy,
                                          const std::vector<Vector>& grid, int max_iter, double tol,
                                          const CollocationOptions& options) {
    std::vector<PIState> states;
    Approximant policy = u0;
    for (int i = 0; i < max_iter; ++i) {
        PIState st;
        st.iteration = i;
        st.policy = policy;
        st.value = policy_evaluation_collocation(model, cost, policy, basis_value, grid, options,
                                                 &st.collocation_residual);
        Projection next = policy_improvement(model, cost, st.value, basis_policy, grid);
        st.next_policy = next.approximant;
        st.projection_residual = next.residual_rms;
        st.hjb_residual = hjb_residual_rms(model, cost, st.value, grid);
        if (!states.empty()) {
            double change = 0.0;
            for (const Vector& x : grid) {
                change = std::max(change, std::abs(st.value.evaluate(x) - states.back().value.evaluate(x)));
            }
            st.value_change = change;
        }
        policy = st.next_policy;
        states.push_back(std::move(st));
        if (states.size() > 1 && states.back().value_change < tol) break;
    }
    return states;
}

} // namespace radp
