#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "radp/basis.hpp"
#include "radp/dynsys.hpp"

namespace radp {

/// Sampling instants t_0 < ... < t_l laid over a recorded trajectory. Each
/// instant is a sample index of the dense integrator grid.
struct SampleWindow {
    const ObservedTrajectory* data = nullptr;
    std::vector<std::size_t> boundaries;

    [[nodiscard]] std::size_t intervals() const { return boundaries.empty() ? 0 : boundaries.size() - 1; }
    [[nodiscard]] double instant(std::size_t k) const { return data->time[boundaries[k]]; }
};

/// Places `count` consecutive intervals of length `interval` starting at
/// `start`. Throws EmptyInterval when an interval holds no dense sample
/// beyond its left end.
SampleWindow make_window(const ObservedTrajectory& data, double interval, std::size_t count, double start = 0.0);

/// Rows theta_k = [phi(x(t_{k+1})) - phi(x(t_k)) ; 2r int phi_u(x) v dt],
/// target_k = -int (Q + r u_i^2) dt, with v = (measured channel) - u_i(x).
struct RegressionProblem {
    Matrix theta;
    Vector target;
    BasisSet basis_value;
    BasisSet basis_policy;
    [[nodiscard]] Eigen::Index rows() const { return theta.rows(); }
};

RegressionProblem assemble_regression(const SampleWindow& window, const BasisSet& basis_value,
                                      const BasisSet& basis_policy, const Approximant& policy, const CostSpec& cost);

struct PEOptions {
    /// Required ratio lambda_min / lambda_max of (1/l) Theta^T Theta after
    /// column equilibration.
    double delta_relative = 1e-6;
};

struct PIStepResult {
    Approximant value;
    Approximant next_policy;
    Vector residuals;
    double residual_rms = 0.0;
    double min_singular_value = 0.0; // lambda_min of (1/l) Theta^T Theta, raw columns
    double pe_ratio = 0.0;           // lambda_min / lambda_max, equilibrated columns
};

/// (sigma_min / sigma_max)^2 of the column-equilibrated design, or 0 when a
/// column carries less than 1e-8 of the largest column norm: such a column is
/// rounding noise, which equilibration would otherwise blow up to full size.
double excitation_level(const Matrix& theta, double relative_min_sv);

/// SVD least squares for one iteration. Throws PEViolation when the
/// relative excitation level is below the threshold.
PIStepResult solve_pi_step(const RegressionProblem& problem, const PEOptions& pe = {});

/// Sum of sinusoids with log-spaced frequencies and seeded phases:
///   e(t) = A / K * sum_k sin(2 pi f_k t + phase_k).
class ExplorationSignal {
public:
    ExplorationSignal() = default;
    ExplorationSignal(double amplitude, std::uint64_t seed, std::size_t components = 10, double f_lo = 0.1,
                      double f_hi = 10.0);

    double operator()(double t) const;
    [[nodiscard]] double amplitude() const { return amplitude_; }
    [[nodiscard]] std::uint64_t seed() const { return seed_; }
    [[nodiscard]] const std::vector<double>& frequencies() const { return freq_; }
    [[nodiscard]] const std::vector<double>& phases() const { return phase_; }

private:
    double amplitude_ = 0.0;
    std::uint64_t seed_ = 0;
    std::vector<double> freq_;
    std::vector<double> phase_;
};

struct OnlinePIConfig {
    BasisSet basis_value;
    BasisSet basis_policy;
    CostSpec cost;
    double interval = 0.1;     // T, s
    std::size_t intervals = 0; // l; 0 means 4 (N1 + N2)
    PEOptions pe;
    double tol = 1e-6;         // relative weight change
    int max_iter = 20;

    [[nodiscard]] std::size_t interval_count() const {
        return intervals ? intervals : static_cast<std::size_t>(4 * (basis_value.size() + basis_policy.size()));
    }
};

struct OnlineIteration {
    int iteration = 0;
    Approximant policy; // u_i used to form v_i
    PIStepResult step;  // V_i and u_{i+1}
    double weight_change = 0.0; // relative, 0 at i = 0
};

struct OnlineRun {
    std::vector<OnlineIteration> iterations;
    ObservedTrajectory data;
    bool converged = false;
    /// Index of the iteration at which the stopping rule fired (-1 if never).
    int converged_at = -1;

    [[nodiscard]] const Approximant& value() const { return iterations.back().step.value; }
    [[nodiscard]] const Approximant& policy() const { return iterations.back().step.next_policy; }
    [[nodiscard]] double residual_rms() const { return iterations.back().step.residual_rms; }
};

/// Iterates on one recorded data set: recomputes v_i per iteration, never
/// touches the plant.
OnlineRun learn_from_data(ObservedTrajectory data, const Approximant& u0, const OnlinePIConfig& config);

/// Collects data once under u = u0 + e, then iterates.
OnlineRun run_online_pi(Plant& plant, const Approximant& u0, const ExplorationSignal& exploration,
                        const OnlinePIConfig& config);

/// Residual of the first evaluation step for each basis pair on the same
/// data window (used to verify that nested enlargement never hurts).
std::vector<double> nested_residuals(const SampleWindow& window, const Approximant& policy, const CostSpec& cost,
                                     const std::vector<std::pair<BasisSet, BasisSet>>& schedule);

struct TwoLoopResult {
    OnlineRun run;
    std::size_t stage = 0;               // chosen schedule entry
    std::vector<double> stage_residuals; // final residual of each stage tried
};

/// Outer loop of the two-loop scheme: enlarge the bases along the schedule
/// until the final residual is at most `threshold`.
TwoLoopResult two_loop_optimize(Plant& plant, const Approximant& u0, const ExplorationSignal& exploration,
                                double threshold, const std::vector<std::pair<BasisSet, BasisSet>>& schedule,
                                const OnlinePIConfig& base);

} // namespace radp
