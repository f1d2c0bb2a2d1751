#pragma once

#include <optional>
#include <string>
#include <vector>

#include "radp/basis.hpp"
#include "radp/dynsys.hpp"

namespace radp {

/// Everything a run needs to know about one plant: the learner-visible model,
/// the hidden subsystem (simulation only), the cost, the initial policy and
/// the declared regions.
struct Problem {
    std::string name;
    SystemModel model;
    std::optional<UncertaintyModel> uncertainty;
    CostSpec cost;
    Approximant u0;
    InitialState init;
    Box x_region;
    Box w_region; // zero-dimensional when there is no hidden subsystem
};

// ---------------------------------------------------------------- arm

/// Single-joint arm, elbow fixed. Units: kg, m, m/s^2, kg m^2, s, rad.
struct ArmModel {
    double m = 1.65;
    double l = 0.179;
    double g = 9.81;
    double inertia = 0.0779;
    double tau_n = 0.1; // neural integrator time constant; declared default, no reference value exists
    double theta0 = 0.7853981633974483;

    void validate() const;
    [[nodiscard]] double a() const { return (1.0 + tau_n) / tau_n; }
    [[nodiscard]] double mgl() const { return m * g * l; }
};

/// Robustness declarations for the arm's hidden channel.
struct ArmGainOptions {
    double eta = 0.1; // |w + I x2| <= max{(1 + eta)|w|, ((1 + eta)/eta) I |x|}
    double mu = 0.1;  // fraction of the w-decay kept in kappa4
};

/// Transformed arm: x = (theta - theta0, theta'), hidden w, input u (offset
/// torque). The hidden channel Delta = w + I x2 is matched:
///   x1' = x2,  x2' = (2mgl/I) sin(x1/2) sin(x1/2 + theta0) + (u + Delta) / I
///   w'  = -a (w + I x2) - 2mgl sin(x1/2) sin(x1/2 + theta0),  a = (1 + tau)/tau.
/// Region {|w| <= 1, |x1| <= 0.8, |x2| <= 3.5}, cost 100 x1^2 + x2^2 + u^2,
/// initial state (w, x1, x2) = (1, -theta0, 0).
Problem build_arm_system(const ArmModel& arm, const Vector& u0_gains, const ArmGainOptions& gains = {},
                         double epsilon = 0.9);

/// (w', x1', x2') of the transformed model.
Vector arm_transformed_dynamics(const ArmModel& arm, double w, const Vector& x, double u);

/// Physical coordinates (theta, theta', n) and muscle input T_m.
struct ArmPhysical {
    double theta = 0.0;
    double theta_dot = 0.0;
    double n = 0.0;
};
ArmPhysical arm_to_physical(const ArmModel& arm, double w, const Vector& x);
std::pair<double, Vector> arm_from_physical(const ArmModel& arm, const ArmPhysical& p);
double arm_muscle_input(const ArmModel& arm, double u);
/// (theta'', n') from I theta'' = -mgl cos(theta) + n + T_m, n' = -n/tau + T_m.
Vector arm_physical_dynamics(const ArmModel& arm, const ArmPhysical& p, double muscle_input);

/// Linearization at the origin, rows (w, x1, x2), columns (w, x1, x2, u).
Matrix arm_linearization(const ArmModel& arm);

// ---------------------------------------------------------------- linear benchmarks

/// x' = A x + B u with cost x^T Q x + r u^2 and u0 = -K0 x.
Problem build_linear_problem(const std::string& name, const Matrix& a, const Matrix& b, const Matrix& q, double r,
                             double epsilon, const Matrix& k0, const Vector& x0, double region_half_width);

/// Scalar hidden subsystem w' = -a_w w + beta c^T x with Delta = delta w and
/// (cascade only) Delta1 = delta1 w. W = w^2 / 2.
struct HiddenLinear {
    double a_w = 1.0;
    double beta = 0.5;
    Vector c;            // coupling direction, |c| = 1 keeps kappa3 tight
    double delta = 0.5;
    double delta1 = 0.0;
    double mu = 0.1;
    double w0 = 0.5;
    double w_half_width = 1.0;
};

/// Linear plant of build_linear_problem with a matched hidden channel.
Problem build_robust_linear_problem(const std::string& name, const Matrix& a, const Matrix& b, const Matrix& q,
                                    double r, double epsilon, const Matrix& k0, const Vector& x0,
                                    double region_half_width, const HiddenLinear& hidden);

/// Scalar cascade x' = a x + (z + Delta), z' = c_xz x z + c_x x + c_z z + u + Delta1
/// with hidden w as in HiddenLinear (c = 1). Cost x^2 + r u^2, u0 = -k0 x.
struct CascadeSpec {
    double a = -1.0;
    double c_xz = 1.0;
    double c_x = 0.0;
    double c_z = 0.0;
    double r = 1.0;
    double epsilon = 0.8;
    double k0 = 0.5;
    double x0 = 0.5;
    double z0 = -0.25;
    double region_half_width = 1.0;
    HiddenLinear hidden;
};
Problem build_cascade_problem(const CascadeSpec& spec);

// ---------------------------------------------------------------- analysis

struct SpeedProfile {
    std::size_t peak_count = 0;
    double peak_time = 0.0;
    double symmetry_index = 0.0;
    double movement_end = 0.0;
    double peak_speed = 0.0;
};

/// Strict local maxima of |speed| above 5% of its maximum on [t0, end].
SpeedProfile speed_profile_analysis(const std::vector<double>& time, const std::vector<double>& speed,
                                    double movement_end);

/// Same, with the movement end at the first passage of |x1| below 2% of
/// |x1(0)|, capped at t0 + 5 s. Speed is x2.
SpeedProfile speed_profile_analysis(const ObservedTrajectory& traj);

struct CostSurfaceComparison {
    double reduction_fraction = 0.0; // share of points with V_final < V_initial
    double max_ratio = 0.0;          // max V_final / V_initial where V_initial > 0
    std::size_t points = 0;
};
CostSurfaceComparison cost_surface_compare(const Approximant& initial, const Approximant& final_value,
                                           const std::vector<Vector>& grid);

/// Tensor grid with `per_axis` points per coordinate over a box.
std::vector<Vector> tensor_grid(const Box& box, std::size_t per_axis);

} // namespace radp
