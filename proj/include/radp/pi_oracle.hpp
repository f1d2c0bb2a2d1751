#pragma once

#include <vector>

#include "radp/basis.hpp"
#include "radp/dynsys.hpp"

namespace radp {

struct CollocationOptions {
    double rank_tolerance = 1e-10; // relative min singular value of the collocation matrix
    bool probe_admissibility = true;
    double probe_horizon = 20.0; // s
    double probe_ball = 1e-3;
    double probe_step = 1e-3;    // s
    std::size_t probe_points = 8;
};

/// One model-based policy iteration step: V_i evaluates `policy` (u_i),
/// `next_policy` is the improved u_{i+1}.
struct PIState {
    int iteration = 0;
    Approximant policy;
    Approximant value;
    Approximant next_policy;
    double collocation_residual = 0.0; // rms of the evaluation equation on the grid
    double projection_residual = 0.0;  // rms of the improvement projection
    double hjb_residual = 0.0;         // rms of the HJB equation for `value`
    double value_change = 0.0;         // grid sup-norm of V_i - V_{i-1} (0 for i = 0)
};

/// Halton collocation grid over `omega` with at least factor * basis_size points.
std::vector<Vector> collocation_grid(const Box& omega, int basis_size, int factor = 4);

/// Simulates the nominal closed loop from grid-sampled initial conditions and
/// throws InadmissiblePolicy unless every probe ends inside the ball.
void check_admissible(const SystemModel& model, const Approximant& policy, const std::vector<Vector>& grid,
                      const CollocationOptions& options = {});

/// Least-squares collocation of  grad V (f + g u) + Q + r u^2 = 0.
Approximant policy_evaluation_collocation(const SystemModel& model, const CostSpec& cost, const Approximant& policy,
                                          const BasisSet& basis_value, const std::vector<Vector>& grid,
                                          const CollocationOptions& options = {},
                                          double* residual_rms = nullptr);

/// u_{i+1} = -(1/2r) g^T grad V projected on the policy basis.
Projection policy_improvement(const SystemModel& model, const CostSpec& cost, const Approximant& value,
                              const BasisSet& basis_policy, const std::vector<Vector>& grid);

/// RMS over the grid of  grad V f + Q - (1/4r) (grad V g)^2.
double hjb_residual_rms(const SystemModel& model, const CostSpec& cost, const Approximant& value,
                        const std::vector<Vector>& grid);

/// Alternates evaluation and improvement until the grid sup-norm of the value
/// change drops below `tol` or `max_iter` evaluations were made.
std::vector<PIState> run_policy_iteration(const SystemModel& model, const CostSpec& cost, const Approximant& u0,
                                          const BasisSet& basis_value, const BasisSet& basis_policy,
                                          const std::vector<Vector>& grid, int max_iter, double tol = 1e-8,
                                          const CollocationOptions& options = {});

} // namespace radp
