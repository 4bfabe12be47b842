#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <stdexcept>

#include "switchdiff/core.hpp"

namespace switchdiff {

// Nodes and weights on (0,1). alpha/beta record the Jacobi factor
// x^alpha (1-x)^beta the rule absorbs (0,0 for a plain Legendre rule, possibly
// on a subinterval).
struct QuadratureRule {
    Eigen::VectorXd nodes;
    Eigen::VectorXd weights;
    double alpha = 0.0;
    double beta = 0.0;

    int size() const { return static_cast<int>(nodes.size()); }
};

// Gauss-Jacobi rule for the weight x^alpha (1-x)^beta on (0,1).
//
// Built by Golub-Welsch on the three-term recurrence of the Jacobi weight
// (1-t)^a (1+t)^b on (-1,1), then mapped through x = (1+t)/2. The map swaps
// the exponent roles: a = beta, b = alpha.
inline QuadratureRule gauss_jacobi_rule(double alpha, double beta, int n_nodes) {
    if (alpha <= -1.0 || beta <= -1.0)
        throw std::invalid_argument("gauss_jacobi_rule: exponents must exceed -1");
    if (n_nodes < 1) throw std::invalid_argument("gauss_jacobi_rule: need at least one node");

    const double a = beta, b = alpha;
    Eigen::VectorXd diag(n_nodes), sub(std::max(n_nodes - 1, 0));
    diag[0] = (b - a) / (a + b + 2.0);
    for (int s = 1; s < n_nodes; ++s) {
        double two = 2.0 * s + a + b;
        diag[s] = (b * b - a * a) / (two * (two + 2.0));
        double bs;  // squared off-diagonal recurrence coefficient
        if (s == 1) {
            bs = 4.0 * (a + 1.0) * (b + 1.0) / ((a + b + 2.0) * (a + b + 2.0) * (a + b + 3.0));
        } else {
            bs = 4.0 * s * (s + a) * (s + b) * (s + a + b) /
                 (two * two * (two + 1.0) * (two - 1.0));
        }
        sub[s - 1] = std::sqrt(bs);
    }

    QuadratureRule rule;
    rule.alpha = alpha;
    rule.beta = beta;
    if (n_nodes == 1) {
        rule.nodes = Eigen::VectorXd::Constant(1, (1.0 + diag[0]) / 2.0);
        rule.weights = Eigen::VectorXd::Constant(1, std::beta(alpha + 1.0, beta + 1.0));
        return rule;
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub);
    if (es.info() != Eigen::Success)
        throw NumericError("gauss_jacobi_rule: tridiagonal eigensolve failed");

    // Total mass of the mapped weight is B(alpha+1, beta+1); Golub-Welsch
    // weights are mu0 times the squared first eigenvector components.
    const double mu0 = std::beta(alpha + 1.0, beta + 1.0);
    rule.nodes.resize(n_nodes);
    rule.weights.resize(n_nodes);
    for (int i = 0; i < n_nodes; ++i) {
        rule.nodes[i] = (1.0 + es.eigenvalues()[i]) / 2.0;
        double v0 = es.eigenvectors()(0, i);
        rule.weights[i] = mu0 * v0 * v0;
    }
    return rule;
}

// Plain Gauss-Legendre rule mapped to (lo,hi); weight function identically 1.
inline QuadratureRule gauss_legendre_rule(double lo, double hi, int n_nodes) {
    if (!(lo < hi)) throw std::invalid_argument("gauss_legendre_rule: empty interval");
    QuadratureRule base = gauss_jacobi_rule(0.0, 0.0, n_nodes);
    QuadratureRule rule;
    rule.nodes = (lo + (hi - lo) * base.nodes.array()).matrix();
    rule.weights = (hi - lo) * base.weights;
    return rule;
}

// <F,G>_W = integral of G^*(x) W(x) F(x).
//
// W is the full weight function. The rule's absorbed Jacobi factor is divided
// back out at each node, so a rule matched to the weight's singular part (for
// the built-in family the remainder W / x^alpha(1-x)^beta is a polynomial)
// integrates polynomial F, G exactly.
inline PhaseMatrix matrix_inner_product(const MatrixPolynomial& F, const MatrixPolynomial& G,
                                        const std::function<PhaseMatrix(double)>& W,
                                        const QuadratureRule& rule) {
    if (F.dim() != G.dim()) throw std::invalid_argument("matrix_inner_product: dimension mismatch");
    const int n = F.dim();
    const bool plain = rule.alpha == 0.0 && rule.beta == 0.0;
    PhaseMatrix acc = PhaseMatrix::Zero(n, n);
    for (int q = 0; q < rule.size(); ++q) {
        const double x = rule.nodes[q];
        PhaseMatrix Wq = W(x);
        if (Wq.rows() != n || Wq.cols() != n)
            throw std::invalid_argument("matrix_inner_product: weight dimension mismatch");
        double wq = rule.weights[q];
        if (!plain) wq /= std::pow(x, rule.alpha) * std::pow(1.0 - x, rule.beta);
        acc.noalias() += wq * (G(x).transpose() * Wq * F(x));
    }
    return acc;
}

// (F,G) = Tr <F,G>_W.
inline double scalar_product(const MatrixPolynomial& F, const MatrixPolynomial& G,
                             const std::function<PhaseMatrix(double)>& W,
                             const QuadratureRule& rule) {
    return matrix_inner_product(F, G, W, rule).trace();
}

}  // namespace switchdiff
