#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "radp/basis.hpp"
#include "radp/dynsys.hpp"
#include "radp/gains.hpp"

namespace radp {

using ScalarField = std::function<double(const Vector&)>;

/// rho(s) = c0 + c1 s with c0 > 0, c1 >= 0: smooth, positive, nondecreasing.
class Rho {
public:
    explicit Rho(double c0 = 1.0, double c1 = 0.0);
    static Rho constant(double c) { return Rho(c, 0.0); }
    static Rho affine(double c0, double c1) { return Rho(c0, c1); }

    double operator()(double s) const { return c0_ + c1_ * s; }
    [[nodiscard]] double c0() const { return c0_; }
    [[nodiscard]] double c1() const { return c1_; }
    [[nodiscard]] std::string describe() const;
    /// Positivity and monotonicity on a ladder over [0, s_max].
    [[nodiscard]] bool valid(double s_max, std::size_t points = 200) const;

private:
    double c0_;
    double c1_;
};

/// u_ro(x) = [1 + (r/2) rho^2(|x|^2)] u_hat(x)
struct RobustPolicy {
    Approximant base;
    Rho rho;
    double control_weight = 1.0;
    double epsilon = 1.0;
    ClassKFunction gamma;

    double operator()(const Vector& x) const;
    [[nodiscard]] double gain_factor(const Vector& x) const;
    /// Analytic gradient; only used to build ground truth for tests and audits.
    [[nodiscard]] Vector gradient(const Vector& x) const;
    [[nodiscard]] Controller controller() const;
};

/// gamma(s) = 1/2 eps rho(s^2) s
ClassKFunction gamma_from_rho(const Rho& rho, double epsilon);

RobustPolicy robust_redesign(const Approximant& u_hat, const Rho& rho, double control_weight, double epsilon = 1.0);

struct GainRow {
    double s = 0;
    double gamma = 0;
    double rhs = 0;
    double kappa2 = 0;
    double chain = 0;
};

struct SmallGainReport {
    bool holds = false;
    double margin = 0.0;          // min over the ladder of gamma - rhs
    double relative_margin = 0.0; // min over the ladder of (gamma - rhs) / gamma
    double s_max = 0.0;
    std::vector<GainRow> table;

    /// Plain-text ladder table.
    void write(std::ostream& os, const std::string& title) const;
};

/// gamma > max{kappa2, kappa1 o lambda_lower^-1 o kappa3 o alpha_lower^-1 o alpha_upper}
/// on a log ladder over (0, s_max].
SmallGainReport check_small_gain_matched(const ClassKFunction& gamma, const ClassKFunction& kappa1,
                                         const ClassKFunction& kappa2, const ClassKFunction& kappa3,
                                         const ClassKFunction& lambda_lower, const ClassKFunction& alpha_lower,
                                         const ClassKFunction& alpha_upper, double s_max,
                                         std::size_t samples = 200);

/// e_ro = (r/2) rho^2(|x|^2) [u_hat - u_next] + u_hat - u_i
ScalarField redesign_error(const Approximant& u_hat, const Approximant& u_i, const Approximant& u_next,
                           const Rho& rho, double control_weight);

/// Class K sandwich of a positive definite function over spheres:
/// lower(s) <= V(x) <= upper(s) for |x| = s, s in (0, radius].
struct Envelope {
    ClassKFunction lower;
    ClassKFunction upper;
    double radius = 0.0;
};
Envelope sphere_envelopes(const ScalarField& v, int dim, double radius, std::size_t radii = 200,
                          std::size_t directions = 64);

/// sigma between chi2 = kappa3 o alpha_lower^-1 and chi1^-1, where
/// chi1 = alpha_upper o gamma^-1 o kappa1 o lambda_lower^-1: the geometric mean
/// of the two on a ladder over (0, v_max], monotonized by a running maximum.
ClassKFunction build_sigma(const ClassKFunction& chi2, const ClassKFunction& chi1, double v_max,
                           std::size_t points = 200);

struct LevelCertificate {
    double d = 0.0;            // certified level (0 if none)
    double worst_ratio = 0.0;  // max |e| / gamma(|x|) over samples with V <= d
    std::size_t samples = 0;   // samples inside the certified level set
};

/// Largest d on a log ladder over (0, d_max] such that
/// 0 < V(x) <= d implies |e(x)| < gamma(|x|) on dense samples of the level set.
LevelCertificate certify_level(const ScalarField& v, const ScalarField& error, const ClassKFunction& gamma,
                               int dim, double radius, double d_max, std::size_t ladder = 100,
                               std::size_t samples = 4000);

/// {(w, x): max[sigma(V(x)), W(w)] <= sigma(d)}
struct RoaEstimate {
    ScalarField value;
    ScalarField w_lyapunov;
    double d = 0.0;
    ClassKFunction sigma;

    [[nodiscard]] double level() const { return d > 0 ? sigma(d) : 0.0; }
    [[nodiscard]] bool contains(const Vector& w, const Vector& x) const;
};

RoaEstimate estimate_roa_matched(ScalarField value, ScalarField w_lyapunov, double d, ClassKFunction sigma);

/// Boundary points of the x-section {V(x) = d} along deterministic directions,
/// found by bisection on [0, radius].
std::vector<Vector> level_set_boundary(const ScalarField& v, double d, int dim, double radius,
                                       std::size_t directions = 128);

/// CSV with columns part,index,c1..cn: x-section points then w-section points.
void write_roa_boundary(std::ostream& os, const std::vector<Vector>& x_boundary,
                        const std::vector<Vector>& w_boundary);

/// Deterministic samples inside the estimate: Halton points of the enclosing
/// box with rejection.
std::vector<std::pair<Vector, Vector>> sample_roa(const RoaEstimate& roa, int x_dim, double x_radius, int w_dim,
                                                  double w_radius, std::size_t count, std::size_t skip = 1);

/// Smallest entry of an increasing rho ladder for which the report built by
/// `check` holds with relative margin at least `min_relative_margin`.
std::optional<Rho> select_rho(const std::vector<double>& ladder,
                              const std::function<SmallGainReport(const Rho&)>& check,
                              double min_relative_margin = 0.1);

struct DescentReport {
    bool holds = true;
    double worst_excess = -std::numeric_limits<double>::infinity(); // max of Vdot + Q0 where checked
    std::size_t checked = 0;
};

/// Along a sampled trajectory, wherever value >= threshold(hidden), checks
/// Vdot <= -Q0 + envelope + slack with a central-difference Vdot.
/// `value` is V (matched) or U (unmatched), `envelope` the extra allowance.
DescentReport check_descent(const std::vector<double>& time, const std::vector<double>& value,
                            const std::vector<double>& threshold, const std::vector<double>& q0,
                            const std::vector<double>& envelope, double slack = 1e-4);

} // namespace radp
