#pragma once

#include <functional>
#include <vector>

#include "radp/basis.hpp"
#include "radp/dynsys.hpp"
#include "radp/gains.hpp"
#include "radp/online_pi.hpp"
#include "radp/robust.hpp"

namespace radp {

/// Error coordinates of the cascade once the virtual control xi is frozen:
/// zeta = z - xi(x), X1 = (x, zeta), U(X1) = V(x) + zeta^2 / 2.
struct BacksteppedState {
    RobustPolicy xi;
    Approximant value;

    [[nodiscard]] double zeta(const Vector& x, double z) const { return z - xi(x); }
    [[nodiscard]] Vector augmented(const Vector& x, double z) const;
    /// Inverse map X1 -> (x, z).
    [[nodiscard]] double z_of(const Vector& augmented) const;
    [[nodiscard]] double composite_value(const Vector& augmented) const;
    [[nodiscard]] double composite_value(const Vector& x, double z) const { return composite_value(augmented(x, z)); }
    [[nodiscard]] std::vector<double> zeta_series(const ObservedTrajectory& data) const;
};

/// (x, z) stacked into one vector; the argument layout of the psi basis.
Vector stack_xz(const Vector& x, double z);

struct PhaseOneResult {
    OnlineRun run;
    RobustPolicy xi;
};

/// Online PI on the x-subsystem with z as its input. Data are collected once
/// under u = collector(x, z, t) over l intervals; the regression reads the
/// measured x-channel (z + Delta) exactly as in the matched case. The learned
/// policy is then redesigned with (rho, epsilon) and returned as the virtual
/// control.
PhaseOneResult phase_one(Plant& plant, const Approximant& u0, const Controller& collector,
                         const OnlinePIConfig& config, const Rho& rho, double epsilon);

/// Tracking collector for phase one: u = -k (z - u0(x) - e(t)).
Controller tracking_collector(const Approximant& u0, const ExplorationSignal& exploration, double gain);

/// Rows [int psi(x, z) zeta ; int phi(x) Delta zeta] and targets
///   zeta^2(t_{k+1}) / 2 - zeta^2(t_k) / 2 - int (u + Delta1) zeta.
/// Delta is read as (x-channel - z), u + Delta1 as the z-channel.
struct PhaseTwoRegression {
    Matrix theta;
    Vector target;
    BasisSet basis_f; // psi, on (x, z)
    BasisSet basis_g; // phi, on x, with constant
    std::vector<double> instants;
    [[nodiscard]] Eigen::Index rows() const { return theta.rows(); }
};

PhaseTwoRegression assemble_phase_two(const SampleWindow& window, const BasisSet& basis_f, const BasisSet& basis_g,
                                      const RobustPolicy& xi);

struct PhaseTwoResult {
    Approximant f_hat; // on (x, z)
    Approximant g_hat; // on x
    Vector residuals;
    double residual_rms = 0.0;
    double min_singular_value = 0.0;
    double pe_ratio = 0.0;
};

PhaseTwoResult solve_phase_two(const PhaseTwoRegression& problem, const PEOptions& pe = {});

/// rho1(s) = 2 rho(s / 2)
Rho rho_one(const Rho& rho);

/// u_ro1 = -f1(x, z) + 2r u(x) - g1^2 rho1^2(|X1|^2) zeta / 4 - eps^2 zeta
///         - rho1^2(|X1|^2) zeta / 4 - eps^2 rho^2(zeta^2) zeta / (2 rho^2(|x|^2))
struct BacksteppedPolicy {
    RobustPolicy xi;
    Approximant f_hat;
    Approximant g_hat;
    Approximant u_next; // last learned policy, the base of xi
    Rho rho;
    double epsilon = 1.0;
    double control_weight = 1.0;

    double operator()(const Vector& x, double z) const;
    [[nodiscard]] Controller controller() const;
};

BacksteppedPolicy backstepped_policy(const RobustPolicy& xi, const Approximant& f_hat, const Approximant& g_hat);

/// Drift and gain of the zeta-subsystem for a known cascade:
///   f1_bar(x, z) = f1(x, z) - dxi/dx (f(x) + g(x) z),  g1_bar(x) = dxi/dx g(x).
/// Only for ground truth in tests and audits; the learner never forms these.
struct ZetaDynamics {
    std::function<double(const Vector& x, double z)> f1_bar;
    ScalarField g1_bar;
};
ZetaDynamics zeta_dynamics(const SystemModel& model, const RobustPolicy& xi);

/// e_ro1(X1) = -f1_bar + f1_hat + 2r (u_next - u_hat) - (g1_bar^2 - g1_hat^2) rho1^2(|X1|^2) zeta / 4,
/// as a function of X1 = (x, zeta).
ScalarField redesign_error_unmatched(const ZetaDynamics& truth, const BacksteppedPolicy& policy,
                                     const ScalarField& u_next_true);

/// gamma1(s) = 1/2 eps rho(s^2 / 2) s
ClassKFunction gamma_one(const Rho& rho, double epsilon);

/// Monotone envelope of max |xi| over spheres of radius s (64 directions by
/// default), cumulative maximum over an increasing radius ladder.
ClassKFunction kappa8_envelope(const ScalarField& xi, int dim, double radius, std::size_t radii = 200,
                               std::size_t directions = 64);

/// max{kappa6(s), kappa7(kappa8(2s)), kappa7(2 kappa8(s)), kappa7(2s)}. The domain is half that of kappa8.
ClassKFunction kappa9(const ClassKFunction& kappa6, const ClassKFunction& kappa7, const ClassKFunction& kappa8);

/// gamma1 > max{kt2, kt1 o lambda_lower^-1 o kappa3 o alpha1_lower^-1 o alpha1_upper},
/// where kt1 = max{kappa1, kappa5} and kt2 = max{kappa2, kappa9}.
SmallGainReport check_small_gain_unmatched(const ClassKFunction& gamma1, const ClassKFunction& kappa_tilde1,
                                           const ClassKFunction& kappa_tilde2, const ClassKFunction& kappa3,
                                           const ClassKFunction& lambda_lower, const ClassKFunction& alpha1_lower,
                                           const ClassKFunction& alpha1_upper, double s_max,
                                           std::size_t samples = 200);

/// {(w, X1): max[sigma1(U(X1)), W(w)] <= sigma1(d1)}
RoaEstimate estimate_roa_unmatched(ScalarField composite_value, ScalarField w_lyapunov, double d1,
                                   ClassKFunction sigma1);

} // namespace radp
