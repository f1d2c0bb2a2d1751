#include "radp/basis.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "radp/errors.hpp"

namespace radp {

namespace {

// Exponent tuples of total degree `degree`, first coordinate largest first.
void enumerate_degree(int dim, int degree, MultiIndex& current, int pos, std::vector<MultiIndex>& out) {
    if (pos == dim - 1) {
        current[pos] = degree;
        out.push_back(current);
        return;
    }
    for (int e = degree; e >= 0; --e) {
        current[pos] = e;
        enumerate_degree(dim, degree - e, current, pos + 1, out);
    }
}

int total_degree(const MultiIndex& a) { return std::accumulate(a.begin(), a.end(), 0); }

} // namespace

BasisSet::BasisSet(int dim, std::vector<MultiIndex> indices) : dim_(dim), indices_(std::move(indices)) {
    if (dim_ < 1) throw std::invalid_argument("BasisSet: dimension must be >= 1");
    for (const auto& a : indices_) {
        if (static_cast<int>(a.size()) != dim_) throw std::invalid_argument("BasisSet: multi-index length mismatch");
        if (std::any_of(a.begin(), a.end(), [](int e) { return e < 0; })) {
            throw std::invalid_argument("BasisSet: negative exponent");
        }
        const int deg = total_degree(a);
        max_degree_ = std::max(max_degree_, deg);
        if (deg == 0) has_constant_ = true;
    }
}

void BasisSet::powers(const Vector& x, Matrix& table) const {
    table.resize(dim_, max_degree_ + 1);
    for (int i = 0; i < dim_; ++i) {
        table(i, 0) = 1.0;
        for (int e = 1; e <= max_degree_; ++e) table(i, e) = table(i, e - 1) * x[i];
    }
}

Vector BasisSet::values(const Vector& x) const {
    Vector out(size());
    values_into(x, out);
    return out;
}

void BasisSet::values_into(const Vector& x, Eigen::Ref<Vector> out) const {
    if (x.size() != dim_) throw DimensionMismatch("BasisSet::values", dim_, x.size());
    Matrix pw;
    powers(x, pw);
    for (int j = 0; j < size(); ++j) {
        double v = 1.0;
        const MultiIndex& a = indices_[static_cast<std::size_t>(j)];
        for (int i = 0; i < dim_; ++i) v *= pw(i, a[static_cast<std::size_t>(i)]);
        out[j] = v;
    }
}

Matrix BasisSet::jacobian(const Vector& x) const {
    if (x.size() != dim_) throw DimensionMismatch("BasisSet::jacobian", dim_, x.size());
    Matrix pw;
    powers(x, pw);
    Matrix jac = Matrix::Zero(size(), dim_);
    for (int j = 0; j < size(); ++j) {
        const MultiIndex& a = indices_[static_cast<std::size_t>(j)];
        for (int d = 0; d < dim_; ++d) {
            const int ed = a[static_cast<std::size_t>(d)];
            if (ed == 0) continue;
            double v = ed * pw(d, ed - 1);
            for (int i = 0; i < dim_; ++i) {
                if (i != d) v *= pw(i, a[static_cast<std::size_t>(i)]);
            }
            jac(j, d) = v;
        }
    }
    return jac;
}

std::string BasisSet::label(int j) const {
    const MultiIndex& a = indices_.at(static_cast<std::size_t>(j));
    std::string out;
    for (int i = 0; i < dim_; ++i) {
        const int e = a[static_cast<std::size_t>(i)];
        if (e == 0) continue;
        if (!out.empty()) out += '*';
        out += "x" + std::to_string(i + 1);
        if (e > 1) out += "^" + std::to_string(e);
    }
    return out.empty() ? "1" : out;
}

bool BasisSet::is_prefix_of(const BasisSet& other) const {
    if (dim_ != other.dim_ || size() > other.size()) return false;
    return std::equal(indices_.begin(), indices_.end(), other.indices_.begin());
}

BasisSet make_polynomial_basis(int dim, int max_degree, bool vanish_at_origin, bool include_constant) {
    if (dim < 1 || max_degree < 1) throw std::invalid_argument("make_polynomial_basis: need dim >= 1, degree >= 1");
    if (vanish_at_origin && include_constant) {
        throw std::invalid_argument("make_polynomial_basis: a constant term cannot vanish at the origin");
    }
    std::vector<MultiIndex> idx;
    MultiIndex cur(static_cast<std::size_t>(dim), 0);
    if (include_constant) idx.push_back(cur);
    for (int d = 1; d <= max_degree; ++d) enumerate_degree(dim, d, cur, 0, idx);
    return BasisSet(dim, std::move(idx));
}

BasisSet make_graded_basis(int dim, int min_degree, int max_degree) {
    if (dim < 1 || min_degree < 0 || max_degree < min_degree) {
        throw std::invalid_argument("make_graded_basis: need dim >= 1 and 0 <= min_degree <= max_degree");
    }
    std::vector<MultiIndex> idx;
    MultiIndex cur(static_cast<std::size_t>(dim), 0);
    if (min_degree == 0) idx.push_back(cur);
    for (int d = std::max(min_degree, 1); d <= max_degree; ++d) enumerate_degree(dim, d, cur, 0, idx);
    return BasisSet(dim, std::move(idx));
}

double gram_min_eigenvalue(const BasisSet& basis, const std::vector<Vector>& samples) {
    Matrix gram = Matrix::Zero(basis.size(), basis.size());
    Vector phi(basis.size());
    for (const Vector& x : samples) {
        basis.values_into(x, phi);
        gram.noalias() += phi * phi.transpose();
    }
    gram /= static_cast<double>(samples.size());
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
    return es.eigenvalues()[0];
}

Approximant::Approximant(BasisSet basis, Vector weights) : basis_(std::move(basis)), weights_(std::move(weights)) {
    if (weights_.size() != basis_.size()) throw DimensionMismatch("Approximant weights", basis_.size(), weights_.size());
}

Approximant Approximant::zero(BasisSet basis) {
    const int n = basis.size();
    return {std::move(basis), Vector::Zero(n)};
}

void Approximant::check_dim(const Vector& x) const {
    if (x.size() != basis_.dim()) throw DimensionMismatch("Approximant input", basis_.dim(), x.size());
}

double Approximant::evaluate(const Vector& x) const {
    check_dim(x);
    return weights_.dot(basis_.values(x));
}

Vector Approximant::gradient(const Vector& x) const {
    check_dim(x);
    return basis_.jacobian(x).transpose() * weights_;
}

Projection project_onto(const BasisSet& basis, const std::vector<Vector>& points, const std::vector<double>& values) {
    if (points.size() != values.size()) throw std::invalid_argument("project_onto: size mismatch");
    Matrix a(static_cast<Eigen::Index>(points.size()), basis.size());
    Vector b(static_cast<Eigen::Index>(points.size()));
    for (std::size_t k = 0; k < points.size(); ++k) {
        const auto row = static_cast<Eigen::Index>(k);
        a.row(row) = basis.values(points[k]).transpose();
        b[row] = values[k];
    }
    const LeastSquaresResult ls = solve_least_squares(a, b);
    return {Approximant(basis, ls.solution), ls.rms, ls.relative_min_sv};
}

} // namespace radp
