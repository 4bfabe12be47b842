#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "switchdiff/core.hpp"

namespace switchdiff {

// Parameters of the switching Wright-Fisher family on (0,1):
// alpha, beta are mutation intensities, k the tendency indicator, n_phases
// the size of the discrete component.
struct WrightFisherParams {
    double alpha = 0.0;
    double beta = 0.0;
    double k = 0.5;
    int n_phases = 1;

    void validate() const {
        if (n_phases < 1) throw std::invalid_argument("n_phases: must be a positive integer");
        if (!(alpha > -1.0)) throw std::invalid_argument("alpha: constraint alpha > -1 violated");
        if (!(beta > -1.0)) throw std::invalid_argument("beta: constraint beta > -1 violated");
        if (!(k > 0.0 && k < beta + 1.0))
            throw std::invalid_argument("k: constraint 0 < k < beta+1 violated");
    }
};

// Weight and coefficient structure known in closed form, enabling exact
// polynomial manipulation downstream: W(x) = x^alpha (1-x)^beta * weight_poly(x),
// A and B polynomial, Q(x) = q_num(x)/(1-x).
struct AnalyticCoefficients {
    double weight_exp_zero = 0.0;  // exponent of x in the scalar prefactor
    double weight_exp_one = 0.0;   // exponent of (1-x)
    MatrixPolynomial weight_poly;
    MatrixPolynomial a_poly;
    MatrixPolynomial b_poly;
    MatrixPolynomial q_num;
};

// Bivariate model: scalar diffusion on (lo,hi) coupled with an N-phase chain.
// A(x) = diag(sigma_i^2), B(x) = diag(tau_i), Q(x) the phase intensity matrix.
// Coefficients are evaluatable closures; `analytic` is present when the model
// comes from the built-in family.
struct SwitchingDiffusionModel {
    int n_phases = 1;
    double lo = 0.0;
    double hi = 1.0;
    std::function<PhaseMatrix(double)> A;
    std::function<PhaseMatrix(double)> B;
    std::function<PhaseMatrix(double)> Q;
    std::function<PhaseMatrix(double)> W;  // empty when no symmetrizing weight is known
    std::optional<WrightFisherParams> wf_params;
    std::optional<AnalyticCoefficients> analytic;

    bool has_weight() const { return static_cast<bool>(W); }
    bool bounded() const { return std::isfinite(lo) && std::isfinite(hi); }
};

// Hahn orthogonality weights omega_i entering H = diag(omega_i).
inline Eigen::VectorXd hahn_weights(const WrightFisherParams& p) {
    p.validate();
    const int N = p.n_phases;
    Eigen::VectorXd w(N);
    for (int i = 1; i <= N; ++i)
        w[i - 1] = generalized_binomial(p.beta - p.k + i - 1, i - 1) *
                   generalized_binomial(N + p.k - i - 1, N - i);
    return w;
}

// Forward jump rate at phase i (defined for i < N) and backward rate (i > 1).
// Both blow up at x = 1; callers clamp.
inline double wf_lambda_rate(const WrightFisherParams& p, int i, double x) {
    return (p.n_phases - i) * (i + p.beta - p.k) / (1.0 - x);
}

inline double wf_mu_rate(const WrightFisherParams& p, int i, double x) {
    return x * (i - 1) * (p.n_phases - i + p.k) / (1.0 - x);
}

inline double wf_drift(const WrightFisherParams& p, int i, double x) {
    return p.alpha + 1 + p.n_phases - i - x * (p.alpha + p.beta + 2 + p.n_phases - i);
}

namespace detail {

inline PhaseMatrix wf_intensity_matrix(const WrightFisherParams& p, double x) {
    const int N = p.n_phases;
    // 1/(1-x) overflows at the right endpoint; the operator lives on the open
    // interval, so evaluation is clamped just inside.
    const double xc = std::min(x, 1.0 - 1e-12);
    PhaseMatrix Q = PhaseMatrix::Zero(N, N);
    for (int i = 1; i <= N; ++i) {
        double lam = i < N ? wf_lambda_rate(p, i, xc) : 0.0;
        double mu = i > 1 ? wf_mu_rate(p, i, xc) : 0.0;
        if (i < N) Q(i - 1, i) = lam;
        if (i > 1) Q(i - 1, i - 2) = mu;
        Q(i - 1, i - 1) = -(lam + mu);
    }
    return Q;
}

inline AnalyticCoefficients wf_analytic(const WrightFisherParams& p) {
    const int N = p.n_phases;
    PhaseMatrix I = PhaseMatrix::Identity(N, N);
    PhaseMatrix J = PhaseMatrix::Zero(N, N), Jb = PhaseMatrix::Zero(N, N);
    PhaseMatrix Mup = PhaseMatrix::Zero(N, N);
    for (int i = 1; i <= N; ++i) {
        J(i - 1, i - 1) = N - i;
        Jb(i - 1, i - 1) = i - 1;
        if (i < N) Mup(i - 1, i) = 1.0;
    }
    PhaseMatrix H = hahn_weights(p).asDiagonal();

    AnalyticCoefficients an;
    an.weight_exp_zero = p.alpha;
    an.weight_exp_one = p.beta;

    // weight_poly = H x^J, diagonal with entries omega_i x^{N-i}
    an.weight_poly = MatrixPolynomial(N);
    for (int i = 1; i <= N; ++i) {
        PhaseMatrix c = an.weight_poly.coeff(N - i);
        c(i - 1, i - 1) = H(i - 1, i - 1);
        an.weight_poly.set_coeff(N - i, c);
    }

    // A(x) = 2x(1-x) I
    an.a_poly = MatrixPolynomial(N);
    an.a_poly.set_coeff(1, 2.0 * I);
    an.a_poly.set_coeff(2, -2.0 * I);

    // B(x) = (alpha+1)I + J - x((alpha+beta+2)I + J)
    an.b_poly = MatrixPolynomial(N);
    an.b_poly.set_coeff(0, (p.alpha + 1.0) * I + J);
    an.b_poly.set_coeff(1, -((p.alpha + p.beta + 2.0) * I + J));

    // (1-x) Q(x) = J((beta-k+1)I + Jb)(M - I) + x Jb(kI + J)(M^T - I)
    an.q_num = MatrixPolynomial(N);
    an.q_num.set_coeff(0, J * ((p.beta - p.k + 1.0) * I + Jb) * (Mup - I));
    an.q_num.set_coeff(1, Jb * (p.k * I + J) * (Mup.transpose() - I));
    return an;
}

}  // namespace detail

// The switching Wright-Fisher diffusion of the built-in family.
inline SwitchingDiffusionModel wright_fisher_model(const WrightFisherParams& p) {
    p.validate();
    const int N = p.n_phases;

    SwitchingDiffusionModel m;
    m.n_phases = N;
    m.lo = 0.0;
    m.hi = 1.0;
    m.wf_params = p;
    m.analytic = detail::wf_analytic(p);

    m.A = [N](double x) {
        return PhaseMatrix((2.0 * x * (1.0 - x)) * PhaseMatrix::Identity(N, N));
    };
    m.B = [p, N](double x) {
        PhaseMatrix b = PhaseMatrix::Zero(N, N);
        for (int i = 1; i <= N; ++i) b(i - 1, i - 1) = wf_drift(p, i, x);
        return b;
    };
    m.Q = [p](double x) { return detail::wf_intensity_matrix(p, x); };

    Eigen::VectorXd om = hahn_weights(p);
    m.W = [p, N, om](double x) {
        PhaseMatrix w = PhaseMatrix::Zero(N, N);
        for (int i = 1; i <= N; ++i)
            w(i - 1, i - 1) = om[i - 1] * std::pow(x, p.alpha + N - i) * std::pow(1.0 - x, p.beta);
        return w;
    };
    return m;
}

// Second built-in model: three Ornstein-Uhlenbeck phases on the whole line
// with the displayed 3x3 intensity matrix. Simulation only; no spectral
// machinery attaches to it.
inline SwitchingDiffusionModel ornstein_uhlenbeck_demo() {
    SwitchingDiffusionModel m;
    m.n_phases = 3;
    m.lo = -std::numeric_limits<double>::infinity();
    m.hi = std::numeric_limits<double>::infinity();
    m.A = [](double) {
        PhaseMatrix a = PhaseMatrix::Zero(3, 3);
        a(0, 0) = 1.0;
        a(1, 1) = 4.0;
        a(2, 2) = 9.0;
        return a;
    };
    m.B = [](double x) {
        PhaseMatrix b = PhaseMatrix::Zero(3, 3);
        b(0, 0) = -x;
        b(1, 1) = -2.0 * x;
        b(2, 2) = -3.0 * x;
        return b;
    };
    m.Q = [](double x) {
        const double x2 = x * x;
        PhaseMatrix q(3, 3);
        q(0, 0) = -(2.0 + x2) / (1.0 + x2);
        q(0, 1) = (5.0 + 3.0 * x2) / (6.0 * (1.0 + x2));
        q(0, 2) = (7.0 + 3.0 * x2) / (6.0 * (1.0 + x2));
        q(1, 0) = 1.0 + x2 / 400.0;
        q(1, 1) = -2.0 - x2 / 100.0;
        q(1, 2) = 1.0 + 3.0 * x2 / 400.0;
        q(2, 0) = 0.5 + 0.5 * std::exp(-x2);
        q(2, 1) = 0.5 + 0.5 * std::exp(-x2);
        q(2, 2) = -1.0 - std::exp(-x2);
        return q;
    };
    return m;
}

struct CheckResult {
    std::string name;
    bool pass = true;
    double worst_x = std::numeric_limits<double>::quiet_NaN();
    double worst_value = 0.0;
};

struct ValidationReport {
    std::vector<CheckResult> checks;

    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }

    const CheckResult* find(const std::string& name) const {
        for (const auto& c : checks)
            if (c.name == name) return &c;
        return nullptr;
    }
};

// Samples the model assumptions: diagonality of A and B, nonnegative
// diffusion, intensity-matrix sign pattern and zero row sums, positive
// definiteness of W when supplied.
inline ValidationReport validate_model(const SwitchingDiffusionModel& m,
                                       const std::vector<double>& sample_points) {
    if (sample_points.empty())
        throw std::invalid_argument("validate_model: sample_points must be nonempty");

    CheckResult a_diag{"A_diagonal"}, b_diag{"B_diagonal"}, a_nonneg{"A_diagonal_nonnegative"},
        q_sign{"Q_sign_pattern"}, q_rowsum{"Q_zero_row_sums"}, w_spd{"W_symmetric_positive_definite"};

    auto worse = [](CheckResult& c, double x, double v, bool ok) {
        if (std::abs(v) > std::abs(c.worst_value) || std::isnan(c.worst_x)) {
            c.worst_value = v;
            c.worst_x = x;
        }
        if (!ok) c.pass = false;
    };

    const int N = m.n_phases;
    for (double x : sample_points) {
        PhaseMatrix A = m.A(x), B = m.B(x), Q = m.Q(x);
        PhaseMatrix offA = A - PhaseMatrix(A.diagonal().asDiagonal());
        PhaseMatrix offB = B - PhaseMatrix(B.diagonal().asDiagonal());
        double va = offA.cwiseAbs().maxCoeff();
        double vb = offB.cwiseAbs().maxCoeff();
        worse(a_diag, x, va, va <= 0.0);
        worse(b_diag, x, vb, vb <= 0.0);
        double mina = A.diagonal().minCoeff();
        worse(a_nonneg, x, mina, mina >= -1e-14);

        double sign_viol = 0.0;
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < N; ++j) {
                if (i == j && Q(i, j) > 0.0) sign_viol = std::max(sign_viol, Q(i, j));
                if (i != j && Q(i, j) < 0.0) sign_viol = std::max(sign_viol, -Q(i, j));
            }
        worse(q_sign, x, sign_viol, sign_viol <= 1e-12);
        double rs = (Q * Eigen::VectorXd::Ones(N)).cwiseAbs().maxCoeff();
        worse(q_rowsum, x, rs, rs <= 1e-12);

        if (m.has_weight()) {
            PhaseMatrix W = m.W(x);
            double asym = (W - W.transpose()).cwiseAbs().maxCoeff();
            Eigen::SelfAdjointEigenSolver<PhaseMatrix> es(0.5 * (W + W.transpose()));
            double mineig = es.eigenvalues().minCoeff();
            bool ok = asym <= 1e-12 && mineig > 0.0;
            worse(w_spd, x, ok ? mineig : (asym > 1e-12 ? asym : mineig), ok);
        }
    }

    ValidationReport rep;
    rep.checks = {a_diag, b_diag, a_nonneg, q_sign, q_rowsum};
    if (m.has_weight()) rep.checks.push_back(w_spd);
    return rep;
}

// Boundary nature of the family on (0,1). The right endpoint absorbs exactly
// when -1 < beta < 0, in every phase; the left endpoint absorbs exactly when
// -1 < alpha < 0 and only in the last phase.
struct BoundaryReport {
    bool upper_absorbing = false;
    bool lower_absorbing_last_phase = false;
    std::vector<bool> lower_absorbing;  // per phase, 0-indexed
    std::vector<bool> upper_absorbing_by_phase;
};

inline BoundaryReport classify_boundaries(const WrightFisherParams& p) {
    p.validate();
    BoundaryReport r;
    r.upper_absorbing = p.beta < 0.0;
    r.lower_absorbing_last_phase = p.alpha < 0.0;
    r.lower_absorbing.assign(p.n_phases, false);
    r.upper_absorbing_by_phase.assign(p.n_phases, r.upper_absorbing);
    if (r.lower_absorbing_last_phase) r.lower_absorbing[p.n_phases - 1] = true;
    return r;
}

// Parses {"model":"wright_fisher","alpha":..,"beta":..,"k":..,"phases":N}.
// "ornstein_uhlenbeck" selects the demo model and takes no parameters.
inline SwitchingDiffusionModel model_from_json(const nlohmann::json& j) {
    if (!j.contains("model") || !j["model"].is_string())
        throw std::invalid_argument("model: missing or non-string field");
    const std::string kind = j["model"].get<std::string>();
    if (kind == "ornstein_uhlenbeck") return ornstein_uhlenbeck_demo();
    if (kind != "wright_fisher")
        throw std::invalid_argument("model: unknown model \"" + kind + "\"");

    WrightFisherParams p;
    auto need_number = [&](const char* field) -> double {
        if (!j.contains(field) || !j[field].is_number())
            throw std::invalid_argument(std::string(field) + ": missing or non-numeric field");
        return j[field].get<double>();
    };
    p.alpha = need_number("alpha");
    p.beta = need_number("beta");
    p.k = need_number("k");
    if (!j.contains("phases") || !j["phases"].is_number_integer())
        throw std::invalid_argument("phases: missing or non-integer field");
    p.n_phases = j["phases"].get<int>();
    p.validate();
    return wright_fisher_model(p);
}

}  // namespace switchdiff
