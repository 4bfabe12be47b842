#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace switchdiff {

// Phase-space matrices are small (N is the phase count, typically 2..5), so
// everything is dense double precision.
using PhaseMatrix = Eigen::MatrixXd;
using PhaseVector = Eigen::VectorXd;

// Numeric failure distinct from bad user input: singular solves, nullspace
// extraction failures, quadrature breakdown. CLI maps this to exit code 3,
// std::invalid_argument to exit code 2.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// a(a+1)...(a+n-1), (a)_0 = 1. Product loop on purpose: a may be negative or
// zero and n stays small, so gamma-function detours would only add sign and
// pole handling.
inline double pochhammer(double a, int n) {
    if (n < 0) throw std::invalid_argument("pochhammer: n must be >= 0");
    double r = 1.0;
    for (int i = 0; i < n; ++i) r *= a + i;
    return r;
}

// Binomial coefficient with real upper argument: a(a-1)...(a-m+1)/m!.
// Well-defined for every real a; m! folded into the loop to keep intermediates
// tame.
inline double generalized_binomial(double a, int m) {
    if (m < 0) throw std::invalid_argument("generalized_binomial: m must be >= 0");
    double r = 1.0;
    for (int i = 0; i < m; ++i) r *= (a - i) / (i + 1);
    return r;
}

// Binomial with both arguments real, via gamma. Only valid when all three
// gamma arguments are positive; callers in this library guarantee that
// (closed-form invariant density uses a+1 > 0, b+1 > 0, a-b+1 > 0).
inline double real_binomial(double a, double b) {
    return std::exp(std::lgamma(a + 1.0) - std::lgamma(b + 1.0) - std::lgamma(a - b + 1.0));
}

// Polynomial with N x N matrix coefficients, coeffs[k] multiplying x^k.
class MatrixPolynomial {
public:
    MatrixPolynomial() : dim_(0) {}

    explicit MatrixPolynomial(int dim) : dim_(dim) {
        if (dim < 1) throw std::invalid_argument("MatrixPolynomial: dim must be >= 1");
    }

    explicit MatrixPolynomial(std::vector<PhaseMatrix> coeffs) : coeffs_(std::move(coeffs)) {
        if (coeffs_.empty()) throw std::invalid_argument("MatrixPolynomial: empty coefficient list");
        dim_ = static_cast<int>(coeffs_[0].rows());
        for (const auto& c : coeffs_) {
            if (c.rows() != dim_ || c.cols() != dim_)
                throw std::invalid_argument("MatrixPolynomial: coefficient dimensions disagree");
        }
    }

    static MatrixPolynomial constant(const PhaseMatrix& c) {
        return MatrixPolynomial(std::vector<PhaseMatrix>{c});
    }

    static MatrixPolynomial zero(int dim) { return MatrixPolynomial(dim); }

    int dim() const { return dim_; }

    // Degree after ignoring trailing zero coefficients; -1 for the zero polynomial.
    int degree() const {
        for (int k = static_cast<int>(coeffs_.size()) - 1; k >= 0; --k)
            if (!coeffs_[k].isZero(0.0)) return k;
        return -1;
    }

    const std::vector<PhaseMatrix>& coeffs() const { return coeffs_; }

    PhaseMatrix coeff(int k) const {
        if (k < 0 || k >= static_cast<int>(coeffs_.size())) return PhaseMatrix::Zero(dim_, dim_);
        return coeffs_[k];
    }

    void set_coeff(int k, const PhaseMatrix& m) {
        if (m.rows() != dim_ || m.cols() != dim_)
            throw std::invalid_argument("MatrixPolynomial: coefficient dimension mismatch");
        if (k >= static_cast<int>(coeffs_.size()))
            coeffs_.resize(k + 1, PhaseMatrix::Zero(dim_, dim_));
        coeffs_[k] = m;
    }

    // Strips trailing exactly-zero coefficient matrices.
    void normalize() {
        while (!coeffs_.empty() && coeffs_.back().isZero(0.0)) coeffs_.pop_back();
    }

    // Horner evaluation.
    PhaseMatrix operator()(double x) const {
        if (coeffs_.empty()) return PhaseMatrix::Zero(dim_, dim_);
        PhaseMatrix acc = coeffs_.back();
        for (int k = static_cast<int>(coeffs_.size()) - 2; k >= 0; --k)
            acc = (acc * x + coeffs_[k]).eval();
        return acc;
    }

    MatrixPolynomial derivative() const {
        if (coeffs_.size() <= 1) return MatrixPolynomial(dim_);
        std::vector<PhaseMatrix> d;
        d.reserve(coeffs_.size() - 1);
        for (std::size_t k = 1; k < coeffs_.size(); ++k) d.push_back(static_cast<double>(k) * coeffs_[k]);
        return MatrixPolynomial(std::move(d));
    }

    MatrixPolynomial transposed() const {
        MatrixPolynomial r(dim_);
        r.coeffs_.reserve(coeffs_.size());
        for (const auto& c : coeffs_) r.coeffs_.push_back(c.transpose());
        return r;
    }

    MatrixPolynomial operator+(const MatrixPolynomial& o) const {
        require_same_dim(o);
        MatrixPolynomial r(dim_);
        std::size_t n = std::max(coeffs_.size(), o.coeffs_.size());
        r.coeffs_.resize(n, PhaseMatrix::Zero(dim_, dim_));
        for (std::size_t k = 0; k < n; ++k) {
            if (k < coeffs_.size()) r.coeffs_[k] += coeffs_[k];
            if (k < o.coeffs_.size()) r.coeffs_[k] += o.coeffs_[k];
        }
        return r;
    }

    MatrixPolynomial operator-(const MatrixPolynomial& o) const {
        require_same_dim(o);
        MatrixPolynomial r(dim_);
        std::size_t n = std::max(coeffs_.size(), o.coeffs_.size());
        r.coeffs_.resize(n, PhaseMatrix::Zero(dim_, dim_));
        for (std::size_t k = 0; k < n; ++k) {
            if (k < coeffs_.size()) r.coeffs_[k] += coeffs_[k];
            if (k < o.coeffs_.size()) r.coeffs_[k] -= o.coeffs_[k];
        }
        return r;
    }

    MatrixPolynomial operator*(double s) const {
        MatrixPolynomial r(dim_);
        r.coeffs_.reserve(coeffs_.size());
        for (const auto& c : coeffs_) r.coeffs_.push_back(s * c);
        return r;
    }

    // Polynomial product; degrees add.
    MatrixPolynomial operator*(const MatrixPolynomial& o) const {
        require_same_dim(o);
        if (coeffs_.empty() || o.coeffs_.empty()) return MatrixPolynomial(dim_);
        MatrixPolynomial r(dim_);
        r.coeffs_.resize(coeffs_.size() + o.coeffs_.size() - 1, PhaseMatrix::Zero(dim_, dim_));
        for (std::size_t i = 0; i < coeffs_.size(); ++i)
            for (std::size_t j = 0; j < o.coeffs_.size(); ++j)
                r.coeffs_[i + j] += coeffs_[i] * o.coeffs_[j];
        return r;
    }

    // Constant matrix times polynomial (M * p) and polynomial times constant (p * M).
    MatrixPolynomial left_multiplied(const PhaseMatrix& m) const {
        MatrixPolynomial r(dim_);
        r.coeffs_.reserve(coeffs_.size());
        for (const auto& c : coeffs_) r.coeffs_.push_back(m * c);
        return r;
    }

    MatrixPolynomial right_multiplied(const PhaseMatrix& m) const {
        MatrixPolynomial r(dim_);
        r.coeffs_.reserve(coeffs_.size());
        for (const auto& c : coeffs_) r.coeffs_.push_back(c * m);
        return r;
    }

private:
    void require_same_dim(const MatrixPolynomial& o) const {
        if (dim_ != o.dim_) throw std::invalid_argument("MatrixPolynomial: dimension mismatch");
    }

    std::vector<PhaseMatrix> coeffs_;
    int dim_;
};

inline MatrixPolynomial operator*(double s, const MatrixPolynomial& p) { return p * s; }

inline PhaseMatrix eval_matrix_polynomial(const MatrixPolynomial& p, double x) { return p(x); }

}  // namespace switchdiff
