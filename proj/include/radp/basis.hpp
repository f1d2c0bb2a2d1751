#pragma once

#include <string>
#include <vector>

#include "radp/numerics.hpp"

namespace radp {

using MultiIndex = std::vector<int>;

/// Ordered set of monomials x^alpha. Ordering is graded: by total degree, and
/// within a degree lexicographically with larger leading exponents first, so
/// weight vectors are comparable across runs.
class BasisSet {
public:
    BasisSet() = default;
    BasisSet(int dim, std::vector<MultiIndex> indices);

    [[nodiscard]] int dim() const { return dim_; }
    [[nodiscard]] int size() const { return static_cast<int>(indices_.size()); }
    [[nodiscard]] const std::vector<MultiIndex>& indices() const { return indices_; }
    [[nodiscard]] int max_degree() const { return max_degree_; }
    [[nodiscard]] bool vanishes_at_origin() const { return !has_constant_; }
    [[nodiscard]] bool has_constant() const { return has_constant_; }

    /// Monomial values at x.
    [[nodiscard]] Vector values(const Vector& x) const;
    void values_into(const Vector& x, Eigen::Ref<Vector> out) const;
    /// d phi_j / d x_i, shape size() x dim().
    [[nodiscard]] Matrix jacobian(const Vector& x) const;

    /// Human-readable name of basis function j, e.g. "x1^2*x2".
    [[nodiscard]] std::string label(int j) const;

    /// True when `other` starts with exactly this basis (nested enlargement).
    [[nodiscard]] bool is_prefix_of(const BasisSet& other) const;

    friend bool operator==(const BasisSet&, const BasisSet&) = default;

private:
    void powers(const Vector& x, Matrix& table) const;

    int dim_ = 0;
    int max_degree_ = 0;
    bool has_constant_ = false;
    std::vector<MultiIndex> indices_;
};

/// All monomials of total degree <= max_degree in `dim` variables.
/// With include_constant the zero multi-index comes first; otherwise the set
/// vanishes at the origin.
BasisSet make_polynomial_basis(int dim, int max_degree, bool vanish_at_origin = true, bool include_constant = false);

/// Monomials with min_degree <= total degree <= max_degree, same ordering.
BasisSet make_graded_basis(int dim, int min_degree, int max_degree);

/// Smallest eigenvalue of the sample Gram matrix (1/m) sum phi(x) phi(x)^T.
double gram_min_eigenvalue(const BasisSet& basis, const std::vector<Vector>& samples);

/// Weighted sum of basis functions.
class Approximant {
public:
    Approximant() = default;
    Approximant(BasisSet basis, Vector weights);
    static Approximant zero(BasisSet basis);

    [[nodiscard]] double evaluate(const Vector& x) const;
    [[nodiscard]] Vector gradient(const Vector& x) const;
    double operator()(const Vector& x) const { return evaluate(x); }

    [[nodiscard]] const BasisSet& basis() const { return basis_; }
    [[nodiscard]] const Vector& weights() const { return weights_; }
    [[nodiscard]] int dim() const { return basis_.dim(); }

    /// Same function, scaled.
    [[nodiscard]] Approximant scaled(double factor) const { return {basis_, factor * weights_}; }

private:
    void check_dim(const Vector& x) const;

    BasisSet basis_;
    Vector weights_;
};

/// Least-squares projection of samples of a scalar function onto a basis.
struct Projection {
    Approximant approximant;
    double residual_rms = 0.0;
    double relative_min_sv = 0.0;
};
Projection project_onto(const BasisSet& basis, const std::vector<Vector>& points, const std::vector<double>& values);

} // namespace radp
