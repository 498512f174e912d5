#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "jexit/errors.hpp"

namespace jexit {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Expansion coefficients like (d-1)! overflow long before this, and the
// regime is unphysical anyway; reject larger dimensions outright.
inline constexpr int kMaxDim = 20;

inline bool all_finite(const Vec& v) { return v.allFinite(); }

// n! and C(n,k) in floating point via lgamma. Exact for every integer value
// representable in a double; the binomial is rounded back to the nearest
// integer since it is one mathematically.
inline double factorial_fp(int n) {
    return std::exp(std::lgamma(static_cast<double>(n) + 1.0));
}

inline double binomial_fp(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    const double lg = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
    return std::round(std::exp(lg));
}

// Kahan compensated accumulator for the double sums in the covariance
// formulas, which mix signs and spread over many magnitudes.
class KahanSum {
  public:
    void add(double x) {
        const double y = x - c_;
        const double t = s_ + y;
        c_ = (t - s_) - y;
        s_ = t;
    }
    double value() const { return s_; }

  private:
    double s_ = 0.0;
    double c_ = 0.0;
};

// Single Jordan block: lambda on the diagonal, ones on the superdiagonal.
struct JordanBlock {
    int dim;
    double lambda;

    JordanBlock(int d, double lam) : dim(d), lambda(lam) {
        if (d < 1 || d > kMaxDim)
            throw InvalidInputError("JordanBlock: dim must be in [1, " +
                                    std::to_string(kMaxDim) + "], got " + std::to_string(d));
        if (!(lam > 0.0) || !std::isfinite(lam))
            throw InvalidInputError("JordanBlock: lambda must be positive and finite");
    }

    Mat matrix() const {
        Mat a = Mat::Zero(dim, dim);
        for (int i = 0; i < dim; ++i) {
            a(i, i) = lambda;
            if (i + 1 < dim) a(i, i + 1) = 1.0;
        }
        return a;
    }
};

// Action of e^{At} on a vector in closed form:
//   (e^{At} v)_i = e^{lambda t} * sum_{j=0}^{d-1-i} t^j/j! * v_{i+j}
// Negative t gives the inverse action through the same formula.
inline Vec exp_action(const JordanBlock& block, double t, const Vec& v) {
    const int d = block.dim;
    if (!std::isfinite(t)) throw InvalidInputError("exp_action: non-finite t");
    if (v.size() != d) throw InvalidInputError("exp_action: vector size mismatch");
    if (!all_finite(v)) throw InvalidInputError("exp_action: non-finite vector component");

    const double growth = std::exp(block.lambda * t);
    Vec out(d);
    for (int i = 0; i < d; ++i) {
        double sum = v[i];
        double term = 1.0;
        for (int j = 1; j <= d - 1 - i; ++j) {
            term *= t / static_cast<double>(j);
            sum += term * v[i + j];
        }
        out[i] = growth * sum;
    }
    return out;
}

namespace detail {

inline void require_symmetric(const Mat& m, double tol, const char* who) {
    if (m.rows() != m.cols()) throw InvalidInputError(std::string(who) + ": matrix not square");
    for (int i = 0; i < m.rows(); ++i)
        for (int j = i + 1; j < m.cols(); ++j)
            if (std::abs(m(i, j) - m(j, i)) > tol)
                throw InvalidInputError(std::string(who) + ": matrix asymmetric beyond tolerance");
}

}  // namespace detail

// Symmetric PSD matrix checked at construction.
class CovarianceMatrix {
  public:
    explicit CovarianceMatrix(Mat m) : m_(std::move(m)) {
        detail::require_symmetric(m_, 1e-12 * std::max(1.0, m_.cwiseAbs().maxCoeff()), "CovarianceMatrix");
        m_ = ((m_ + m_.transpose()) / 2.0).eval();
        Eigen::SelfAdjointEigenSolver<Mat> es(m_, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -1e-10)
            throw NumericDomainError("CovarianceMatrix: not positive semidefinite");
    }

    int dim() const { return static_cast<int>(m_.rows()); }
    const Mat& entries() const { return m_; }

  private:
    Mat m_;
};

// Covariance of N = int_0^inf e^{-As} sigma(0) dW(s):
//   E N_i N_j = sum_{p,q} C(p+q,q) (-1)^{p+q} / (2 lambda)^{p+q+1} * a0[p+i, q+j]
// (0-based indices here; p <= d-1-i, q <= d-1-j).
inline CovarianceMatrix limit_noise_covariance(const JordanBlock& block, const Mat& a0) {
    const int d = block.dim;
    if (a0.rows() != d || a0.cols() != d)
        throw InvalidInputError("limit_noise_covariance: a0 size mismatch");
    detail::require_symmetric(a0, 1e-10 * std::max(1.0, a0.cwiseAbs().maxCoeff()),
                              "limit_noise_covariance");

    const double two_lam = 2.0 * block.lambda;
    Mat out(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = i; j < d; ++j) {
            KahanSum sum;
            for (int p = 0; p <= d - 1 - i; ++p) {
                for (int q = 0; q <= d - 1 - j; ++q) {
                    const double sgn = ((p + q) % 2 == 0) ? 1.0 : -1.0;
                    const double coeff =
                        binomial_fp(p + q, q) * sgn / std::pow(two_lam, p + q + 1);
                    sum.add(coeff * a0(p + i, q + j));
                }
            }
            out(i, j) = sum.value();
            out(j, i) = sum.value();
        }
    }
    return CovarianceMatrix(out);
}

// int_0^delta u^n e^{-2 lambda u} du for n = 0..nmax via the stable recurrence
//   I_0 = (1 - e^{-2 lambda delta}) / (2 lambda)
//   I_n = (n I_{n-1} - delta^n e^{-2 lambda delta}) / (2 lambda)
inline std::vector<double> exp_moment_integrals(double lambda, double delta, int nmax) {
    const double two_lam = 2.0 * lambda;
    const double tail = std::exp(-two_lam * delta);
    std::vector<double> out(nmax + 1);
    out[0] = (1.0 - tail) / two_lam;
    double dpow = 1.0;
    for (int n = 1; n <= nmax; ++n) {
        dpow *= delta;
        out[n] = (n * out[n - 1] - dpow * tail) / two_lam;
    }
    return out;
}

// Finite-horizon noise covariance int_0^delta e^{-Au} a0 e^{-A^T u} du.
inline CovarianceMatrix finite_noise_covariance(const JordanBlock& block, const Mat& a0,
                                                double delta) {
    const int d = block.dim;
    if (a0.rows() != d || a0.cols() != d)
        throw InvalidInputError("finite_noise_covariance: a0 size mismatch");
    if (!(delta >= 0.0) || !std::isfinite(delta))
        throw InvalidInputError("finite_noise_covariance: delta must be nonnegative");
    detail::require_symmetric(a0, 1e-10 * std::max(1.0, a0.cwiseAbs().maxCoeff()),
                              "finite_noise_covariance");
    if (delta == 0.0) return CovarianceMatrix(Mat::Zero(d, d));

    const std::vector<double> moments = exp_moment_integrals(block.lambda, delta, 2 * (d - 1));
    Mat out(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = i; j < d; ++j) {
            KahanSum sum;
            for (int p = 0; p <= d - 1 - i; ++p) {
                for (int q = 0; q <= d - 1 - j; ++q) {
                    const double sgn = ((p + q) % 2 == 0) ? 1.0 : -1.0;
                    const double coeff = sgn / (factorial_fp(p) * factorial_fp(q));
                    sum.add(coeff * moments[p + q] * a0(p + i, q + j));
                }
            }
            out(i, j) = sum.value();
            out(j, i) = sum.value();
        }
    }
    return CovarianceMatrix(out);
}

// Lower-triangular L with L L^T = m. PSD rank deficiency is handled by zeroing
// the offending column: for a PSD matrix a vanishing pivot forces the rest of
// its row/column to vanish as well, so skipping is exact up to the tolerance.
inline Mat cholesky_or_psd_factor(const Mat& m) {
    detail::require_symmetric(m, 1e-10 * std::max(1.0, m.cwiseAbs().maxCoeff()),
                              "cholesky_or_psd_factor");
    const int d = static_cast<int>(m.rows());
    const double scale = std::max(1.0, m.diagonal().cwiseAbs().maxCoeff());
    const double tol = 1e-8 * scale;

    Mat a = m;
    Mat l = Mat::Zero(d, d);
    for (int k = 0; k < d; ++k) {
        double pivot = a(k, k);
        if (pivot < -tol)
            throw NumericDomainError("cholesky_or_psd_factor: matrix is indefinite");
        if (pivot <= tol) continue;  // zeroed column
        const double root = std::sqrt(pivot);
        l(k, k) = root;
        for (int i = k + 1; i < d; ++i) l(i, k) = a(i, k) / root;
        for (int i = k + 1; i < d; ++i)
            for (int j = k + 1; j <= i; ++j) {
                a(i, j) -= l(i, k) * l(j, k);
                a(j, i) = a(i, j);
            }
    }
    return l;
}

inline Mat cholesky_or_psd_factor(const CovarianceMatrix& cov) {
    return cholesky_or_psd_factor(cov.entries());
}

}  // namespace jexit
