#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "switchdiff/core.hpp"
#include "switchdiff/model.hpp"
#include "switchdiff/quadrature.hpp"

namespace switchdiff {

// Diagonal eigenvalue matrix of the n-th eigenfunction:
// entry (j,j) = -n^2 - n(alpha+beta+N+j-1) - (j-1)(alpha+beta-k+j).
inline PhaseMatrix eigenvalue_ladder(const WrightFisherParams& p, int n) {
    p.validate();
    if (n < 0) throw std::invalid_argument("eigenvalue_ladder: n must be >= 0");
    const int N = p.n_phases;
    PhaseMatrix g = PhaseMatrix::Zero(N, N);
    for (int j = 1; j <= N; ++j)
        g(j - 1, j - 1) = -static_cast<double>(n) * n - n * (p.alpha + p.beta + N + j - 1) -
                          (j - 1) * (p.alpha + p.beta - p.k + j);
    return g;
}

namespace detail {

// Vector polynomial as an N x (D+1) coefficient matrix, column m = coefficient
// of x^m.
using VecPoly = Eigen::MatrixXd;

inline Eigen::VectorXd eval_vec_poly(const VecPoly& c, double x) {
    Eigen::VectorXd acc = c.col(c.cols() - 1);
    for (int m = static_cast<int>(c.cols()) - 2; m >= 0; --m) acc = acc * x + c.col(m);
    return acc;
}

// Coefficient-matching matrix for the denominator-cleared eigenvalue equation
//   (1-x)[1/2 A phi'' + B phi' - gamma phi] + q_num phi = 0.
// Row block p collects the x^p coefficient of the residual; column block m is
// the unknown coefficient c_m. The cleared operator polynomials all have small
// degree, so the system is block tridiagonal-ish and the matrix stays tiny.
inline Eigen::MatrixXd eigen_constraint_matrix(const AnalyticCoefficients& an, double gamma,
                                               int degree) {
    const int N = an.a_poly.dim();
    MatrixPolynomial one_minus_x(N);
    one_minus_x.set_coeff(0, PhaseMatrix::Identity(N, N));
    one_minus_x.set_coeff(1, -PhaseMatrix::Identity(N, N));

    MatrixPolynomial a_til = one_minus_x * an.a_poly * 0.5;
    MatrixPolynomial b_til = one_minus_x * an.b_poly;
    MatrixPolynomial q_til = an.q_num - gamma * one_minus_x;

    const int D = degree;
    const int max_p = D + std::max({a_til.degree() - 2, b_til.degree() - 1, q_til.degree(), 0});
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(N * (max_p + 1), N * (D + 1));
    for (int m = 0; m <= D; ++m) {
        for (int r = 0; r <= a_til.degree(); ++r) {
            int pw = r + m - 2;
            if (m >= 2 && pw >= 0 && pw <= max_p)
                C.block(N * pw, N * m, N, N) += a_til.coeff(r) * (double(m) * (m - 1));
        }
        for (int r = 0; r <= b_til.degree(); ++r) {
            int pw = r + m - 1;
            if (m >= 1 && pw >= 0 && pw <= max_p)
                C.block(N * pw, N * m, N, N) += b_til.coeff(r) * double(m);
        }
        for (int r = 0; r <= q_til.degree(); ++r) {
            int pw = r + m;
            if (pw <= max_p) C.block(N * pw, N * m, N, N) += q_til.coeff(r);
        }
    }
    return C;
}

struct BasisSlot {
    int n = 0;
    int col = 0;  // 0-based phase column
    double gamma = 0.0;
    VecPoly coeffs;
};

}  // namespace detail

struct SpectralBasis {
    WrightFisherParams params;
    int truncation = 0;
    std::vector<MatrixPolynomial> eigenfunctions;  // Phi_n
    std::vector<Eigen::VectorXd> eigenvalues;      // diagonal of Gamma_n
    QuadratureRule rule;                           // absorbs x^alpha (1-x)^beta
    MatrixPolynomial weight_poly;                  // H x^J
    AnalyticCoefficients analytic;

    PhaseMatrix gamma(int n) const { return PhaseMatrix(eigenvalues.at(n).asDiagonal()); }

    // Full weight W(y), scalar prefactor included.
    PhaseMatrix weight(double y) const {
        return std::pow(y, params.alpha) * std::pow(1.0 - y, params.beta) * weight_poly(y);
    }

    // Bound on the first omitted term's time decay for the requested t.
    double tail_estimate(double t) const {
        const auto& p = params;
        double top = -double(truncation) * truncation - truncation * (p.alpha + p.beta + p.n_phases);
        return std::exp(t * top);
    }
};

namespace detail {

inline double vec_wip(const VecPoly& u, const VecPoly& v, const QuadratureRule& rule,
                      const std::vector<PhaseMatrix>& weight_at_nodes) {
    double acc = 0.0;
    for (int q = 0; q < rule.size(); ++q) {
        Eigen::VectorXd ue = eval_vec_poly(u, rule.nodes[q]);
        Eigen::VectorXd ve = eval_vec_poly(v, rule.nodes[q]);
        acc += rule.weights[q] * ve.dot(weight_at_nodes[q] * ue);
    }
    return acc;
}

inline VecPoly pad_cols(const VecPoly& c, int cols) {
    VecPoly out = VecPoly::Zero(c.rows(), cols);
    out.block(0, 0, c.rows(), std::min<int>(c.cols(), cols)) =
        c.leftCols(std::min<int>(c.cols(), cols));
    return out;
}

}  // namespace detail

// Builds the orthonormal eigenfunction family for the built-in model by
// nullspace extraction on the cleared coefficient-matching system, one
// (level, column) slot at a time. Scalar eigenvalues that coincide within
// 1e-10 are treated as one degenerate eigenspace: candidates are projected
// against the slots already accepted there and the dominant remaining
// direction (in the W-metric) is taken, which is block Gram-Schmidt in
// arrival order. Sign convention: in the highest-degree nonzero coefficient
// the entry of largest magnitude is positive.
inline SpectralBasis build_spectral_basis(const SwitchingDiffusionModel& m,
                                          const WrightFisherParams& p, int M) {
    p.validate();
    if (M < 1) throw std::invalid_argument("build_spectral_basis: truncation must be >= 1");
    if (!m.analytic || !m.wf_params)
        throw std::invalid_argument("build_spectral_basis: model must carry analytic coefficients");

    const int N = p.n_phases;
    SpectralBasis basis;
    basis.params = p;
    basis.truncation = M;
    basis.analytic = *m.analytic;
    basis.weight_poly = m.analytic->weight_poly;

    int max_deg = (M - 1) + N - 1 + 1;  // +1 slack for the degree-retry path
    int n_nodes = max_deg + N + 2;
    if (n_nodes % 2) ++n_nodes;
    basis.rule = gauss_jacobi_rule(p.alpha, p.beta, n_nodes);

    std::vector<PhaseMatrix> weight_at_nodes(basis.rule.size());
    for (int q = 0; q < basis.rule.size(); ++q)
        weight_at_nodes[q] = basis.weight_poly(basis.rule.nodes[q]);

    std::vector<detail::BasisSlot> slots;
    slots.reserve(static_cast<std::size_t>(M) * N);

    for (int n = 0; n < M; ++n) {
        PhaseMatrix gam = eigenvalue_ladder(p, n);
        for (int j = 0; j < N; ++j) {
            const double g = gam(j, j);

            std::vector<detail::VecPoly> candidates;
            int used_degree = 0;
            for (int degree : {n + N - 1, n + N}) {
                Eigen::MatrixXd C = detail::eigen_constraint_matrix(*m.analytic, g, degree);
                Eigen::JacobiSVD<Eigen::MatrixXd> svd(C, Eigen::ComputeFullV);
                const auto& sv = svd.singularValues();
                const double cutoff = 1e-10 * sv[0];
                candidates.clear();
                for (int c = 0; c < svd.matrixV().cols(); ++c) {
                    if (c < sv.size() && sv[c] >= cutoff) continue;
                    Eigen::VectorXd flat = svd.matrixV().col(c);
                    detail::VecPoly vp(N, degree + 1);
                    for (int mm = 0; mm <= degree; ++mm) vp.col(mm) = flat.segment(N * mm, N);
                    candidates.push_back(vp);
                }
                used_degree = degree;
                if (!candidates.empty()) break;
            }
            if (candidates.empty()) {
                std::ostringstream os;
                os << "build_spectral_basis: empty nullspace at level " << n << ", column "
                   << (j + 1) << " (eigenvalue " << g << "), degrees " << (n + N - 1) << " and "
                   << (n + N);
                throw NumericError(os.str());
            }

            double raw_max = 0.0;
            for (const auto& c : candidates)
                raw_max = std::max(raw_max, detail::vec_wip(c, c, basis.rule, weight_at_nodes));

            // Project out previously accepted members of the same eigenspace.
            std::vector<detail::VecPoly> proj = candidates;
            for (const auto& slot : slots) {
                if (std::abs(slot.gamma - g) > 1e-10) continue;
                detail::VecPoly prev = detail::pad_cols(slot.coeffs, used_degree + 1);
                for (auto& c : proj)
                    c -= prev * detail::vec_wip(c, prev, basis.rule, weight_at_nodes);
            }

            const int K = static_cast<int>(proj.size());
            Eigen::MatrixXd gram(K, K);
            for (int a = 0; a < K; ++a)
                for (int b = a; b < K; ++b) {
                    gram(a, b) = detail::vec_wip(proj[a], proj[b], basis.rule, weight_at_nodes);
                    gram(b, a) = gram(a, b);
                }
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ges(gram);
            const int top = K - 1;
            if (!(ges.eigenvalues()[top] > 1e-8 * raw_max)) {
                std::ostringstream os;
                os << "build_spectral_basis: degenerate eigenspace exhausted at level " << n
                   << ", column " << (j + 1) << " (eigenvalue " << g << ")";
                throw NumericError(os.str());
            }
            detail::VecPoly v = detail::VecPoly::Zero(N, used_degree + 1);
            for (int a = 0; a < K; ++a) v += ges.eigenvectors()(a, top) * proj[a];
            v /= std::sqrt(detail::vec_wip(v, v, basis.rule, weight_at_nodes));

            // Deterministic sign.
            double cmax = v.cwiseAbs().maxCoeff();
            for (int mm = static_cast<int>(v.cols()) - 1; mm >= 0; --mm) {
                if (v.col(mm).cwiseAbs().maxCoeff() > 1e-12 * cmax) {
                    int idx;
                    v.col(mm).cwiseAbs().maxCoeff(&idx);
                    if (v(idx, mm) < 0.0) v = -v;
                    break;
                }
            }

            slots.push_back({n, j, g, v});
        }
    }

    for (int n = 0; n < M; ++n) {
        int deg = 0;
        for (const auto& s : slots)
            if (s.n == n) deg = std::max(deg, static_cast<int>(s.coeffs.cols()) - 1);
        MatrixPolynomial phi(N);
        phi.set_coeff(deg, PhaseMatrix::Zero(N, N));
        for (const auto& s : slots) {
            if (s.n != n) continue;
            for (int mm = 0; mm < s.coeffs.cols(); ++mm) {
                PhaseMatrix c = phi.coeff(mm);
                c.col(s.col) = s.coeffs.col(mm);
                phi.set_coeff(mm, c);
            }
        }
        phi.normalize();
        basis.eigenfunctions.push_back(phi);
        basis.eigenvalues.push_back(eigenvalue_ladder(p, n).diagonal());
    }
    return basis;
}

// Coefficient norm of the residual polynomial of the cleared-denominator
// eigenvalue equation, scaled per column; zero for exact eigenfunctions.
inline double operator_residual(const SpectralBasis& basis, int n) {
    const int N = basis.params.n_phases;
    const MatrixPolynomial& phi = basis.eigenfunctions.at(n);
    double worst = 0.0;
    for (int j = 0; j < N; ++j) {
        const int D = std::max(phi.degree(), 0);
        Eigen::MatrixXd C =
            detail::eigen_constraint_matrix(basis.analytic, basis.eigenvalues[n][j], D);
        Eigen::VectorXd flat(N * (D + 1));
        for (int mm = 0; mm <= D; ++mm) flat.segment(N * mm, N) = phi.coeff(mm).col(j);
        // Monomial coefficients of a unit-norm column reach ~1e7 by degree
        // 10, so the meaningful measure is backward error: residual relative
        // to the column's own coefficient scale.
        const double scale = flat.cwiseAbs().maxCoeff();
        worst = std::max(worst, (C * flat).cwiseAbs().maxCoeff() / std::max(scale, 1e-300));
    }
    return worst;
}

// P(t;x,y) = sum_n Phi_n(x) e^{t Gamma_n} Phi_n^*(y) W(y), truncated.
inline PhaseMatrix transition_density(const SpectralBasis& basis, double t, double x, double y) {
    if (!(t > 0.0)) throw std::invalid_argument("transition_density: t must be positive");
    const int N = basis.params.n_phases;
    PhaseMatrix acc = PhaseMatrix::Zero(N, N);
    PhaseMatrix Wy = basis.weight(y);
    for (int n = 0; n < basis.truncation; ++n) {
        Eigen::VectorXd e = (t * basis.eigenvalues[n].array()).exp();
        acc.noalias() +=
            basis.eigenfunctions[n](x) * e.asDiagonal() * basis.eigenfunctions[n](y).transpose();
    }
    return acc * Wy;
}

// Interval probability: rows of the integral of P(t;x,.) over (lo,hi).
// The full interval goes through the basis rule (exact); strict subintervals
// use Gauss-Legendre with the weight factor evaluated explicitly.
inline PhaseMatrix transition_probability(const SpectralBasis& basis, double t, double x, double lo,
                                          double hi) {
    if (!(lo < hi)) throw std::invalid_argument("transition_probability: empty interval");
    if (lo < 0.0 || hi > 1.0)
        throw std::invalid_argument("transition_probability: interval outside (0,1)");
    const int N = basis.params.n_phases;

    if (lo <= 1e-12 && hi >= 1.0 - 1e-12) {
        PhaseMatrix acc = PhaseMatrix::Zero(N, N);
        for (int n = 0; n < basis.truncation; ++n) {
            Eigen::VectorXd e = (t * basis.eigenvalues[n].array()).exp();
            PhaseMatrix inner = PhaseMatrix::Zero(N, N);
            for (int q = 0; q < basis.rule.size(); ++q) {
                double yq = basis.rule.nodes[q];
                inner.noalias() += basis.rule.weights[q] *
                                   (basis.eigenfunctions[n](yq).transpose() * basis.weight_poly(yq));
            }
            acc.noalias() += basis.eigenfunctions[n](x) * e.asDiagonal() * inner;
        }
        return acc;
    }

    QuadratureRule sub = gauss_legendre_rule(lo, hi, 64);
    PhaseMatrix acc = PhaseMatrix::Zero(N, N);
    for (int q = 0; q < sub.size(); ++q)
        acc += sub.weights[q] * transition_density(basis, t, x, sub.nodes[q]);
    return acc;
}

// <A Phi_n, Phi_m>_W - <Phi_n, A Phi_m>_W, max norm; the generator is applied
// pointwise at the interior quadrature nodes where 1/(1-x) is harmless.
inline double self_adjointness_residual(const SpectralBasis& basis, int n, int m) {
    const int N = basis.params.n_phases;
    const MatrixPolynomial &pn = basis.eigenfunctions.at(n), &pm = basis.eigenfunctions.at(m);
    MatrixPolynomial dpn = pn.derivative(), ddpn = dpn.derivative();
    MatrixPolynomial dpm = pm.derivative(), ddpm = dpm.derivative();
    const auto& an = basis.analytic;

    auto apply = [&](const MatrixPolynomial& f, const MatrixPolynomial& df,
                     const MatrixPolynomial& ddf, double x) {
        return PhaseMatrix(0.5 * an.a_poly(x) * ddf(x) + an.b_poly(x) * df(x) +
                           an.q_num(x) * f(x) / (1.0 - x));
    };

    PhaseMatrix left = PhaseMatrix::Zero(N, N), right = PhaseMatrix::Zero(N, N);
    for (int q = 0; q < basis.rule.size(); ++q) {
        double x = basis.rule.nodes[q];
        PhaseMatrix Wq = basis.weight_poly(x);
        left.noalias() +=
            basis.rule.weights[q] * (pm(x).transpose() * Wq * apply(pn, dpn, ddpn, x));
        right.noalias() +=
            basis.rule.weights[q] * (apply(pm, dpm, ddpm, x).transpose() * Wq * pn(x));
    }
    return (left - right).cwiseAbs().maxCoeff();
}

// Row-vector invariant distribution psi with both evaluation routes: the
// closed-form per-component expression and the generic c e^T W(y).
struct InvariantDistribution {
    WrightFisherParams params;
    double normalization = 0.0;       // c in the generic route
    Eigen::VectorXd closed_constants;  // psi_j(y) = closed_constants[j] y^{alpha+N-j}(1-y)^beta
    Eigen::VectorXd weights;           // Hahn weights, for the generic route

    double component(int j, double y) const {
        const int N = params.n_phases;
        return closed_constants[j - 1] * std::pow(y, params.alpha + N - j) *
               std::pow(1.0 - y, params.beta);
    }

    double component_generic(int j, double y) const {
        const int N = params.n_phases;
        return normalization * weights[j - 1] * std::pow(y, params.alpha + N - j) *
               std::pow(1.0 - y, params.beta);
    }

    Eigen::VectorXd row(double y) const {
        Eigen::VectorXd r(params.n_phases);
        for (int j = 1; j <= params.n_phases; ++j) r[j - 1] = component(j, y);
        return r;
    }

    // Per-phase masses via the Beta integral; they sum to 1.
    Eigen::VectorXd masses() const {
        const int N = params.n_phases;
        Eigen::VectorXd m(N);
        for (int j = 1; j <= N; ++j)
            m[j - 1] = closed_constants[j - 1] *
                       std::beta(params.alpha + N - j + 1.0, params.beta + 1.0);
        return m;
    }
};

inline InvariantDistribution invariant_distribution(const WrightFisherParams& p) {
    p.validate();
    const int N = p.n_phases;
    InvariantDistribution d;
    d.params = p;
    d.weights = hahn_weights(p);

    double mass = 0.0;  // integral of e^T W e
    for (int j = 1; j <= N; ++j)
        mass += d.weights[j - 1] * std::beta(p.alpha + N - j + 1.0, p.beta + 1.0);
    d.normalization = 1.0 / mass;

    d.closed_constants.resize(N);
    for (int j = 1; j <= N; ++j) {
        d.closed_constants[j - 1] =
            generalized_binomial(N - 1.0, j - 1) * real_binomial(p.alpha + p.beta + N, p.alpha) *
            (p.beta + N) * pochhammer(p.k, N - j) * pochhammer(p.beta - p.k + 1.0, j - 1) /
            pochhammer(p.alpha + p.beta - p.k + 2.0, N - 1);
    }
    return d;
}

namespace detail {

// Log-derivative factors of the scalar prefactor s(y) = y^a (1-y)^b:
// s'/s and s''/s.
inline void prefactor_log_derivatives(double a, double b, double y, double& l1, double& l2) {
    l1 = a / y - b / (1.0 - y);
    l2 = l1 * l1 - a / (y * y) - b / ((1.0 - y) * (1.0 - y));
}

}  // namespace detail

// Residual of the stationarity equation 1/2 (psi A)'' - (psi B)' + psi Q at y,
// with derivatives taken analytically through the s(y) prefactor.
inline double stationarity_residual(const InvariantDistribution& dist, double y) {
    const auto& p = dist.params;
    const int N = p.n_phases;
    AnalyticCoefficients an = detail::wf_analytic(p);

    // psi = s(y) r(y) with r_j(y) = closed_constants[j] y^{N-j}: assemble r as
    // row-coefficient array over powers of y.
    const int dr = N - 1;
    auto row_times_poly = [&](const MatrixPolynomial& mp) {
        int dm = std::max(mp.degree(), 0);
        std::vector<Eigen::RowVectorXd> out(dr + dm + 1, Eigen::RowVectorXd::Zero(N));
        for (int i = 0; i <= dr; ++i) {
            Eigen::RowVectorXd ri = Eigen::RowVectorXd::Zero(N);
            // power i of y holds the component with N-j = i
            int j = N - i;
            ri[j - 1] = dist.closed_constants[j - 1];
            for (int mdeg = 0; mdeg <= dm; ++mdeg) out[i + mdeg] += ri * mp.coeff(mdeg);
        }
        return out;
    };
    auto eval_row = [&](const std::vector<Eigen::RowVectorXd>& c, double yy) {
        Eigen::RowVectorXd acc = c.back();
        for (int i = static_cast<int>(c.size()) - 2; i >= 0; --i) acc = acc * yy + c[i];
        return acc;
    };
    auto deriv_row = [&](const std::vector<Eigen::RowVectorXd>& c) {
        std::vector<Eigen::RowVectorXd> out;
        for (std::size_t i = 1; i < c.size(); ++i) out.push_back(double(i) * c[i]);
        if (out.empty()) out.push_back(Eigen::RowVectorXd::Zero(N));
        return out;
    };

    double l1, l2;
    detail::prefactor_log_derivatives(p.alpha, p.beta, y, l1, l2);
    const double s = std::pow(y, p.alpha) * std::pow(1.0 - y, p.beta);

    auto ga = row_times_poly(an.a_poly);
    auto ga1 = deriv_row(ga);
    auto ga2 = deriv_row(ga1);
    Eigen::RowVectorXd d2_psiA =
        s * (l2 * eval_row(ga, y) + 2.0 * l1 * eval_row(ga1, y) + eval_row(ga2, y));

    auto gb = row_times_poly(an.b_poly);
    auto gb1 = deriv_row(gb);
    Eigen::RowVectorXd d1_psiB = s * (l1 * eval_row(gb, y) + eval_row(gb1, y));

    auto gq = row_times_poly(an.q_num);
    Eigen::RowVectorXd psiQ = s / (1.0 - y) * eval_row(gq, y);

    return (0.5 * d2_psiA - d1_psiB + psiQ).cwiseAbs().maxCoeff();
}

// Residual maxima of the three symmetry identities tying W to the generator:
//   A^T W = W A
//   B^T W = (WA)' - W B
//   Q^T W = 1/2 (WA)'' - (WB)' + W Q
// Analytic derivatives when the model carries its coefficient structure,
// centered differences (step 1e-6) otherwise.
struct SymmetryReport {
    double zeroth_order = 0.0;
    double first_order = 0.0;
    double second_order = 0.0;

    double max() const { return std::max({zeroth_order, first_order, second_order}); }
};

inline SymmetryReport verify_symmetry_equations(const SwitchingDiffusionModel& m,
                                                const std::vector<double>& points) {
    if (!m.has_weight()) throw std::invalid_argument("verify_symmetry_equations: model has no W");
    SymmetryReport rep;

    auto wa = [&](double x) { return PhaseMatrix(m.W(x) * m.A(x)); };
    auto wb = [&](double x) { return PhaseMatrix(m.W(x) * m.B(x)); };

    const bool analytic = m.analytic.has_value();
    MatrixPolynomial ga(m.n_phases), gb(m.n_phases), ga1(m.n_phases), ga2(m.n_phases),
        gb1(m.n_phases);
    if (analytic) {
        ga = m.analytic->weight_poly * m.analytic->a_poly;
        gb = m.analytic->weight_poly * m.analytic->b_poly;
        ga1 = ga.derivative();
        ga2 = ga1.derivative();
        gb1 = gb.derivative();
    }

    for (double x : points) {
        PhaseMatrix W = m.W(x), A = m.A(x), B = m.B(x), Q = m.Q(x);
        PhaseMatrix d1_wa, d2_wa, d1_wb;
        if (analytic) {
            double l1, l2;
            detail::prefactor_log_derivatives(m.analytic->weight_exp_zero,
                                              m.analytic->weight_exp_one, x, l1, l2);
            double s = std::pow(x, m.analytic->weight_exp_zero) *
                       std::pow(1.0 - x, m.analytic->weight_exp_one);
            d1_wa = s * (l1 * ga(x) + ga1(x));
            d2_wa = s * (l2 * ga(x) + 2.0 * l1 * ga1(x) + ga2(x));
            d1_wb = s * (l1 * gb(x) + gb1(x));
        } else {
            const double h = 1e-6;
            d1_wa = (wa(x + h) - wa(x - h)) / (2.0 * h);
            d2_wa = (wa(x + h) - 2.0 * wa(x) + wa(x - h)) / (h * h);
            d1_wb = (wb(x + h) - wb(x - h)) / (2.0 * h);
        }
        rep.zeroth_order =
            std::max(rep.zeroth_order, (A.transpose() * W - W * A).cwiseAbs().maxCoeff());
        rep.first_order =
            std::max(rep.first_order, (B.transpose() * W - d1_wa + W * B).cwiseAbs().maxCoeff());
        rep.second_order =
            std::max(rep.second_order,
                     (Q.transpose() * W - 0.5 * d2_wa + d1_wb - W * Q).cwiseAbs().maxCoeff());
    }
    return rep;
}

namespace detail {

// Shared scaffolding of the Kolmogorov residual checks: per-mode polynomials
// G_n = Phi_n^T Hx^J so that Phi_n^*(y) W(y) = s(y) G_n(y).
struct ModeData {
    MatrixPolynomial g;      // G_n
    MatrixPolynomial ga;     // G_n * A
    MatrixPolynomial gb;     // G_n * B
    MatrixPolynomial gq;     // G_n * q_num
};

inline ModeData mode_data(const SpectralBasis& basis, int n) {
    ModeData d;
    d.g = basis.eigenfunctions[n].transposed() * basis.weight_poly;
    d.ga = d.g * basis.analytic.a_poly;
    d.gb = d.g * basis.analytic.b_poly;
    d.gq = d.g * basis.analytic.q_num;
    return d;
}

}  // namespace detail

// Max-norm residual of the backward equation dP/dt = 1/2 A(x) Pxx + B(x) Px + Q(x) P
// for the truncated spectral sum; all derivatives analytic.
inline double backward_equation_residual(const SpectralBasis& basis, double t, double x, double y) {
    if (!(t > 0.0)) throw std::invalid_argument("backward_equation_residual: t must be positive");
    const int N = basis.params.n_phases;
    const auto& an = basis.analytic;
    PhaseMatrix Wy = basis.weight(y);

    PhaseMatrix dt = PhaseMatrix::Zero(N, N), lhs = PhaseMatrix::Zero(N, N);
    PhaseMatrix A = an.a_poly(x), B = an.b_poly(x);
    PhaseMatrix Q = an.q_num(x) / (1.0 - x);
    for (int n = 0; n < basis.truncation; ++n) {
        const MatrixPolynomial& phi = basis.eigenfunctions[n];
        MatrixPolynomial dphi = phi.derivative();
        MatrixPolynomial ddphi = dphi.derivative();
        Eigen::VectorXd e = (t * basis.eigenvalues[n].array()).exp();
        PhaseMatrix K = phi(y).transpose() * Wy;
        PhaseMatrix EK = e.asDiagonal() * K;
        dt.noalias() += phi(x) * (basis.eigenvalues[n].asDiagonal() * EK);
        lhs.noalias() += (0.5 * A * ddphi(x) + B * dphi(x) + Q * phi(x)) * EK;
    }
    return (dt - lhs).cwiseAbs().maxCoeff();
}

// Max-norm residual of the forward equation
// dP/dt = 1/2 d2/dy2 (P A(y)) - d/dy (P B(y)) + P Q(y).
inline double forward_equation_residual(const SpectralBasis& basis, double t, double x, double y) {
    if (!(t > 0.0)) throw std::invalid_argument("forward_equation_residual: t must be positive");
    const int N = basis.params.n_phases;
    const auto& p = basis.params;

    double l1, l2;
    detail::prefactor_log_derivatives(p.alpha, p.beta, y, l1, l2);
    const double s = std::pow(y, p.alpha) * std::pow(1.0 - y, p.beta);

    PhaseMatrix dt = PhaseMatrix::Zero(N, N), rhs = PhaseMatrix::Zero(N, N);
    for (int n = 0; n < basis.truncation; ++n) {
        detail::ModeData md = detail::mode_data(basis, n);
        Eigen::VectorXd e = (t * basis.eigenvalues[n].array()).exp();
        PhaseMatrix front = basis.eigenfunctions[n](x) * e.asDiagonal();

        MatrixPolynomial ga1 = md.ga.derivative(), ga2 = ga1.derivative();
        MatrixPolynomial gb1 = md.gb.derivative();
        PhaseMatrix d2_pa = s * (l2 * md.ga(y) + 2.0 * l1 * ga1(y) + ga2(y));
        PhaseMatrix d1_pb = s * (l1 * md.gb(y) + gb1(y));
        PhaseMatrix pq = (s / (1.0 - y)) * md.gq(y);

        dt.noalias() += front * basis.eigenvalues[n].asDiagonal() * (s * md.g(y));
        rhs.noalias() += front * (0.5 * d2_pa - d1_pb + pq);
    }
    return (dt - rhs).cwiseAbs().maxCoeff();
}

// Max-norm of int P(s;x,z) P(t;z,y) dz - P(s+t;x,y); the z-integral runs over
// the basis rule, which is exact for the polynomial integrand.
inline double chapman_kolmogorov_residual(const SpectralBasis& basis, double s, double t, double x,
                                          double y) {
    const int N = basis.params.n_phases;
    PhaseMatrix acc = PhaseMatrix::Zero(N, N);
    for (int q = 0; q < basis.rule.size(); ++q) {
        const double z = basis.rule.nodes[q];
        PhaseMatrix first = PhaseMatrix::Zero(N, N);
        for (int n = 0; n < basis.truncation; ++n) {
            Eigen::VectorXd e = (s * basis.eigenvalues[n].array()).exp();
            first.noalias() += basis.eigenfunctions[n](x) * e.asDiagonal() *
                               basis.eigenfunctions[n](z).transpose();
        }
        first *= basis.weight_poly(z);
        acc.noalias() += basis.rule.weights[q] * (first * transition_density(basis, t, z, y));
    }
    return (acc - transition_density(basis, s + t, x, y)).cwiseAbs().maxCoeff();
}

// Export as a list of {n, gamma_diag, coeffs}; coeffs[k] is the N x N
// coefficient of x^k.
inline nlohmann::json basis_to_json(const SpectralBasis& basis) {
    nlohmann::json out = nlohmann::json::array();
    for (int n = 0; n < basis.truncation; ++n) {
        nlohmann::json entry;
        entry["n"] = n;
        entry["gamma_diag"] = std::vector<double>(
            basis.eigenvalues[n].data(), basis.eigenvalues[n].data() + basis.eigenvalues[n].size());
        nlohmann::json coeffs = nlohmann::json::array();
        const auto& phi = basis.eigenfunctions[n];
        for (int k = 0; k <= phi.degree(); ++k) {
            nlohmann::json mat = nlohmann::json::array();
            for (int i = 0; i < phi.dim(); ++i) {
                nlohmann::json row = nlohmann::json::array();
                for (int j = 0; j < phi.dim(); ++j) row.push_back(phi.coeff(k)(i, j));
                mat.push_back(row);
            }
            coeffs.push_back(mat);
        }
        entry["coeffs"] = coeffs;
        out.push_back(entry);
    }
    return out;
}

// Import; params must match the exporting model (the file stores only the
// basis itself).
inline SpectralBasis basis_from_json(const nlohmann::json& j, const WrightFisherParams& p) {
    p.validate();
    if (!j.is_array() || j.empty())
        throw std::invalid_argument("basis_from_json: expected a nonempty list");
    const int N = p.n_phases;

    SpectralBasis basis;
    basis.params = p;
    basis.truncation = static_cast<int>(j.size());
    SwitchingDiffusionModel m = wright_fisher_model(p);
    basis.analytic = *m.analytic;
    basis.weight_poly = m.analytic->weight_poly;

    int max_deg = basis.truncation - 1 + N;
    int n_nodes = max_deg + N + 2;
    if (n_nodes % 2) ++n_nodes;
    basis.rule = gauss_jacobi_rule(p.alpha, p.beta, n_nodes);

    basis.eigenfunctions.resize(basis.truncation, MatrixPolynomial(N));
    basis.eigenvalues.resize(basis.truncation);
    for (const auto& entry : j) {
        int n = entry.at("n").get<int>();
        if (n < 0 || n >= basis.truncation)
            throw std::invalid_argument("basis_from_json: level index out of range");
        auto gd = entry.at("gamma_diag").get<std::vector<double>>();
        if (static_cast<int>(gd.size()) != N)
            throw std::invalid_argument("basis_from_json: gamma_diag size mismatch");
        basis.eigenvalues[n] = Eigen::Map<Eigen::VectorXd>(gd.data(), N);
        const auto& coeffs = entry.at("coeffs");
        MatrixPolynomial phi(N);
        for (std::size_t k = 0; k < coeffs.size(); ++k) {
            PhaseMatrix c(N, N);
            for (int i = 0; i < N; ++i)
                for (int jj = 0; jj < N; ++jj) c(i, jj) = coeffs[k][i][jj].get<double>();
            phi.set_coeff(static_cast<int>(k), c);
        }
        basis.eigenfunctions[n] = phi;
    }
    return basis;
}

}  // namespace switchdiff
