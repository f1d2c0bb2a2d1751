#include "radp/numerics.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace radp {

namespace {

constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

// Acklam's rational approximation to the standard normal quantile; accurate
// enough to spread quasi-random directions evenly.
double normal_quantile(double p) {
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double plow = 0.02425;
    if (p < plow) {
        const double q = std::sqrt(-2 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    if (p > 1 - plow) {
        const double q = std::sqrt(-2 * std::log(1 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

} // namespace

Box Box::symmetric(const Vector& half_widths) { return Box{-half_widths, half_widths}; }

bool Box::contains(const Vector& x, double tol) const {
    if (x.size() != lo.size()) return false;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (x[i] < lo[i] - tol || x[i] > hi[i] + tol) return false;
    }
    return true;
}

Box Box::inflated(double fraction) const {
    const Vector mid = 0.5 * (lo + hi);
    const Vector half = 0.5 * (hi - lo) * (1.0 + fraction);
    return Box{mid - half, mid + half};
}

bool Box::degenerate(double tol) const { return ((hi - lo).array() <= tol).any(); }

double Box::max_norm() const { return lo.cwiseAbs().cwiseMax(hi.cwiseAbs()).norm(); }

double radical_inverse(std::size_t index, int base) {
    double result = 0.0;
    double f = 1.0 / base;
    while (index > 0) {
        result += f * static_cast<double>(index % base);
        index /= base;
        f /= base;
    }
    return result;
}

std::vector<Vector> halton_points(const Box& box, std::size_t count, std::size_t skip) {
    const int n = box.dim();
    if (n > static_cast<int>(std::size(kPrimes))) throw std::invalid_argument("halton_points: dimension too large");
    std::vector<Vector> points;
    points.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        Vector p(n);
        for (int i = 0; i < n; ++i) {
            const double u = radical_inverse(k + skip, kPrimes[i]);
            p[i] = box.lo[i] + u * (box.hi[i] - box.lo[i]);
        }
        points.push_back(std::move(p));
    }
    return points;
}

std::vector<double> log_space(double lo, double hi, std::size_t count) {
    if (count < 2 || !(lo > 0) || !(hi > lo)) throw std::invalid_argument("log_space: need 0 < lo < hi, count >= 2");
    std::vector<double> out(count);
    const double a = std::log(lo);
    const double b = std::log(hi);
    for (std::size_t k = 0; k < count; ++k) {
        out[k] = std::exp(a + (b - a) * static_cast<double>(k) / static_cast<double>(count - 1));
    }
    out.front() = lo;
    out.back() = hi;
    return out;
}

std::vector<Vector> sphere_directions(int dim, std::size_t count) {
    std::vector<Vector> dirs;
    if (dim == 1) {
        dirs.push_back(Vector::Constant(1, 1.0));
        dirs.push_back(Vector::Constant(1, -1.0));
        return dirs;
    }
    dirs.reserve(count);
    if (dim == 2) {
        for (std::size_t k = 0; k < count; ++k) {
            const double a = 2 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(count);
            Vector v(2);
            v << std::cos(a), std::sin(a);
            dirs.push_back(std::move(v));
        }
        return dirs;
    }
    // Axis directions first, then normalized quasi-random Gaussian samples.
    for (int i = 0; i < dim && dirs.size() < count; ++i) {
        dirs.push_back(Vector::Unit(dim, i));
        if (dirs.size() < count) dirs.push_back(-Vector::Unit(dim, i));
    }
    for (std::size_t k = 1; dirs.size() < count; ++k) {
        Vector v(dim);
        for (int i = 0; i < dim; ++i) v[i] = normal_quantile(radical_inverse(k, kPrimes[i]));
        const double nrm = v.norm();
        if (nrm > 1e-12) dirs.push_back(v / nrm);
    }
    return dirs;
}

double trapezoid(std::span<const double> time, std::span<const double> values) {
    double acc = 0.0;
    for (std::size_t k = 1; k < time.size(); ++k) {
        acc += 0.5 * (time[k] - time[k - 1]) * (values[k] + values[k - 1]);
    }
    return acc;
}

LeastSquaresResult solve_least_squares(const Matrix& a, const Vector& b, double truncation) {
    if (a.rows() != b.size()) throw std::invalid_argument("solve_least_squares: row mismatch");
    LeastSquaresResult out;
    const Eigen::Index cols = a.cols();
    Vector scale = Vector::Ones(cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        const double nrm = a.col(j).norm();
        if (nrm > 0) scale[j] = 1.0 / nrm;
    }
    const Matrix scaled = a * scale.asDiagonal();
    Eigen::JacobiSVD<Matrix> svd(scaled, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.singular_values = svd.singularValues();
    const double smax = out.singular_values.size() ? out.singular_values[0] : 0.0;
    const double smin = out.singular_values.size() ? out.singular_values[out.singular_values.size() - 1] : 0.0;
    out.relative_min_sv = smax > 0 ? smin / smax : 0.0;

    const double cutoff = truncation * smax;
    const Vector utb = svd.matrixU().transpose() * b;
    Vector coeffs = Vector::Zero(out.singular_values.size());
    for (Eigen::Index k = 0; k < coeffs.size(); ++k) {
        if (out.singular_values[k] > cutoff && out.singular_values[k] > 0) coeffs[k] = utb[k] / out.singular_values[k];
    }
    out.solution = scale.asDiagonal() * (svd.matrixV() * coeffs);
    out.residuals = a * out.solution - b;
    out.rms = a.rows() > 0 ? std::sqrt(out.residuals.squaredNorm() / static_cast<double>(a.rows())) : 0.0;
    return out;
}

} // namespace radp
