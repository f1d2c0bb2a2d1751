#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace radp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Axis-aligned box [lo, hi] in R^n.
struct Box {
    Vector lo;
    Vector hi;

    static Box symmetric(const Vector& half_widths);

    [[nodiscard]] int dim() const { return static_cast<int>(lo.size()); }
    [[nodiscard]] bool contains(const Vector& x, double tol = 0.0) const;
    [[nodiscard]] Box inflated(double fraction) const;
    [[nodiscard]] bool degenerate(double tol = 0.0) const;
    [[nodiscard]] double diameter() const { return (hi - lo).norm(); }
    /// Largest Euclidean norm of a point in the box.
    [[nodiscard]] double max_norm() const;
};

/// Radical inverse of `index` in base `base` (van der Corput sequence).
double radical_inverse(std::size_t index, int base);

/// Deterministic Halton points over a box. Index 0 (the corner) is skipped.
std::vector<Vector> halton_points(const Box& box, std::size_t count, std::size_t skip = 1);

/// `count` values log-spaced on [lo, hi], both endpoints included.
std::vector<double> log_space(double lo, double hi, std::size_t count);

/// Deterministic unit directions in R^dim.
std::vector<Vector> sphere_directions(int dim, std::size_t count);

/// Composite trapezoid rule for samples on a grid.
double trapezoid(std::span<const double> time, std::span<const double> values);

struct LeastSquaresResult {
    Vector solution;
    Vector singular_values;     // of the column-equilibrated matrix
    Vector residuals;           // A x - b
    double rms = 0.0;           // sqrt(sum residual^2 / rows)
    double relative_min_sv = 0; // sigma_min / sigma_max of the equilibrated matrix
};

/// Minimum-norm least squares via SVD on a column-equilibrated copy of A.
/// Columns that are identically zero are left unscaled. Singular values below
/// `truncation` times the largest are treated as zero.
LeastSquaresResult solve_least_squares(const Matrix& a, const Vector& b, double truncation = 1e-13);

} // namespace radp
