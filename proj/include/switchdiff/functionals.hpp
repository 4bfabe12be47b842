#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "switchdiff/core.hpp"
#include "switchdiff/model.hpp"

namespace switchdiff {

enum class BvpKind { hitting, exit_time };

struct BvpSolution {
    Eigen::VectorXd grid;
    std::vector<PhaseMatrix> values;
    double c = 0.0, d = 1.0;
    BvpKind kind = BvpKind::hitting;

    // Linear interpolation between grid points. For convergence studies
    // evaluate at shared grid points, otherwise the O(h^2) interpolation
    // error mixes into the discretization error.
    PhaseMatrix at(double x) const {
        const int n = static_cast<int>(grid.size());
        if (x <= grid[0]) return values.front();
        if (x >= grid[n - 1]) return values.back();
        const double h = (d - c) / (n - 1);
        int m = static_cast<int>((x - c) / h);
        m = std::min(std::max(m, 0), n - 2);
        const double w = (x - grid[m]) / (grid[m + 1] - grid[m]);
        return (1.0 - w) * values[m] + w * values[m + 1];
    }
};

namespace detail {

// Centered second-order blocks for 1/2 A u'' + B u' + Q u = -g on (c,d),
// Dirichlet data at both ends, N right-hand-side columns solved at once.
// The assembled matrix is block tridiagonal with N x N blocks; SparseLU
// factors it directly (band structure, small fill-in).
inline std::vector<PhaseMatrix> solve_block_bvp(const SwitchingDiffusionModel& m, double c,
                                                double d, int n_grid, const PhaseMatrix& left_value,
                                                const PhaseMatrix& right_value,
                                                const std::function<PhaseMatrix(double)>& g,
                                                const char* what) {
    const int N = m.n_phases;
    const double h = (d - c) / n_grid;
    const int n_int = n_grid - 1;
    const int n_unknown = n_int * N;

    Eigen::SparseMatrix<double> S(n_unknown, n_unknown);
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(n_unknown) * 3 * N);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n_unknown, N);

    for (int mi = 0; mi < n_int; ++mi) {
        const double x = c + (mi + 1) * h;
        const PhaseMatrix A = m.A(x), B = m.B(x), Q = m.Q(x);
        const PhaseMatrix L = A / (2.0 * h * h) - B / (2.0 * h);
        const PhaseMatrix D = -A / (h * h) + Q;
        const PhaseMatrix R = A / (2.0 * h * h) + B / (2.0 * h);

        for (int r = 0; r < N; ++r)
            for (int cc = 0; cc < N; ++cc) {
                if (D(r, cc) != 0.0) trips.emplace_back(mi * N + r, mi * N + cc, D(r, cc));
                if (mi > 0 && L(r, cc) != 0.0)
                    trips.emplace_back(mi * N + r, (mi - 1) * N + cc, L(r, cc));
                if (mi < n_int - 1 && R(r, cc) != 0.0)
                    trips.emplace_back(mi * N + r, (mi + 1) * N + cc, R(r, cc));
            }
        if (g) rhs.middleRows(mi * N, N) -= g(x);
        if (mi == 0) rhs.middleRows(mi * N, N) -= L * left_value;
        if (mi == n_int - 1) rhs.middleRows(mi * N, N) -= R * right_value;
    }
    S.setFromTriplets(trips.begin(), trips.end());

    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(S);
    if (lu.info() != Eigen::Success) {
        std::string msg = std::string(what) + ": singular linear system (" +
                          std::to_string(n_unknown) + " unknowns";
        if (n_unknown <= 2000) {
            Eigen::JacobiSVD<Eigen::MatrixXd> svd{Eigen::MatrixXd(S)};
            const double smin = svd.singularValues().minCoeff();
            const double smax = svd.singularValues().maxCoeff();
            char buf[64];
            std::snprintf(buf, sizeof(buf), ", condition estimate %.3g",
                          smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity());
            msg += buf;
        } else {
            msg += ", condition estimate unavailable";
        }
        throw NumericError(msg + ")");
    }
    Eigen::MatrixXd sol = lu.solve(rhs);
    if (lu.info() != Eigen::Success) throw NumericError(std::string(what) + ": solve failed");

    std::vector<PhaseMatrix> values;
    values.reserve(n_grid + 1);
    values.push_back(left_value);
    for (int mi = 0; mi < n_int; ++mi) values.push_back(sol.middleRows(mi * N, N));
    values.push_back(right_value);
    return values;
}

inline void check_bvp_args(const SwitchingDiffusionModel& m, double c, double d, int n_grid,
                           const char* what) {
    if (!(m.lo < c && c < d && d < m.hi))
        throw std::invalid_argument(std::string(what) +
                                    ": need interior boundary points a < c < d < b");
    if (n_grid < 16) throw std::invalid_argument(std::string(what) + ": n_grid must be >= 16");
}

}  // namespace detail

// Probability of reaching d before c, per starting and terminal-decision
// phase: column j of the solution is the vector problem with boundary data
// e_j at d and 0 at c. Pass swap_boundary_data to get the complementary
// matrix (reach c before d).
inline BvpSolution solve_hitting(const SwitchingDiffusionModel& m, double c, double d, int n_grid,
                                 bool swap_boundary_data = false) {
    detail::check_bvp_args(m, c, d, n_grid, "solve_hitting");
    const int N = m.n_phases;
    const PhaseMatrix zero = PhaseMatrix::Zero(N, N);
    const PhaseMatrix eye = PhaseMatrix::Identity(N, N);

    BvpSolution out;
    out.c = c;
    out.d = d;
    out.kind = BvpKind::hitting;
    out.grid = Eigen::VectorXd::LinSpaced(n_grid + 1, c, d);
    out.values = detail::solve_block_bvp(m, c, d, n_grid, swap_boundary_data ? eye : zero,
                                         swap_boundary_data ? zero : eye, nullptr, "solve_hitting");
    return out;
}

// Expected accumulated G until the first exit from (c,d); G = all-ones gives
// mean exit time split by terminal phase.
inline BvpSolution solve_exit_time(const SwitchingDiffusionModel& m, double c, double d,
                                   const std::function<PhaseMatrix(double)>& G, int n_grid) {
    detail::check_bvp_args(m, c, d, n_grid, "solve_exit_time");
    const int N = m.n_phases;
    const PhaseMatrix zero = PhaseMatrix::Zero(N, N);
    std::function<PhaseMatrix(double)> g = G;
    if (!g) g = [N](double) { return PhaseMatrix::Ones(N, N); };

    BvpSolution out;
    out.c = c;
    out.d = d;
    out.kind = BvpKind::exit_time;
    out.grid = Eigen::VectorXd::LinSpaced(n_grid + 1, c, d);
    out.values = detail::solve_block_bvp(m, c, d, n_grid, zero, zero, g, "solve_exit_time");
    return out;
}

inline BvpSolution solve_exit_time(const SwitchingDiffusionModel& m, double c, double d,
                                   int n_grid) {
    return solve_exit_time(m, c, d, nullptr, n_grid);
}

enum class TendencyRegime { max_forward, max_backward, mixed };

struct TendencyReport {
    // Index i-1 for phase i; defined exactly for i = 2..N-1. A value above 1
    // means the forward rate dominates on the whole interval.
    std::vector<std::optional<double>> thresholds;
    TendencyRegime regime = TendencyRegime::mixed;
    std::vector<double> k_breakpoints;
};

// Where the forward and backward switch rates balance, phase by phase, and
// the regime of k relative to the breakpoints (beta+1)m/(N-1).
inline TendencyReport tendency_analysis(const WrightFisherParams& p) {
    p.validate();
    const int N = p.n_phases;
    TendencyReport rep;
    rep.thresholds.assign(N, std::nullopt);
    for (int i = 2; i <= N - 1; ++i)
        rep.thresholds[i - 1] = (N - i) * (i + p.beta - p.k) / ((i - 1.0) * (N - i + p.k));
    for (int mm = 1; mm <= N - 2; ++mm) rep.k_breakpoints.push_back((p.beta + 1.0) * mm / (N - 1.0));
    // N = 2 has no interior balance and both regime bounds collapse; the
    // forward test runs first so that case lands on max_forward.
    if (p.k < (p.beta + 1.0) / (N - 1.0))
        rep.regime = TendencyRegime::max_forward;
    else if (p.k > (p.beta + 1.0) * (N - 2.0) / (N - 1.0))
        rep.regime = TendencyRegime::max_backward;
    else
        rep.regime = TendencyRegime::mixed;
    return rep;
}

struct RecurrenceRow {
    double eps = 0.0;
    double min_hit_mass = 0.0;   // min over probes of (hitting matrix) * ones
    double max_exit_time = 0.0;  // max entry of the exit-time matrix at probes
};

struct RecurrenceReport {
    std::vector<RecurrenceRow> rows;
    double target_y = 0.5;
    double extrapolated_min = 0.0;
    bool recurrent = false;
    bool positive_recurrent = false;
    std::string verdict;
};

// Shrinking-margin study of whether mass reaches a fixed interior target from
// everywhere and whether expected exit times stay bounded. The endpoints are
// singular, so the limit is read off a linear-in-eps extrapolation of the
// trend table, never evaluated directly.
inline RecurrenceReport classify_recurrence(const SwitchingDiffusionModel& m,
                                            const std::vector<double>& eps_schedule,
                                            int n_grid = 512) {
    if (eps_schedule.size() < 3)
        throw std::invalid_argument("classify_recurrence: need at least 3 epsilon values");
    for (std::size_t s = 0; s + 1 < eps_schedule.size(); ++s)
        if (!(eps_schedule[s] > eps_schedule[s + 1]) || !(eps_schedule[s + 1] > 0.0))
            throw std::invalid_argument("classify_recurrence: schedule must decrease toward 0");
    if (!m.bounded())
        throw std::invalid_argument("classify_recurrence: needs a bounded state interval");
    const double a = m.lo, b = m.hi;
    const double eps_max = eps_schedule.front();
    if (!(eps_max < (b - a) / 4.0))
        throw std::invalid_argument("classify_recurrence: epsilon too large for the interval");

    RecurrenceReport rep;
    const double y = 0.5 * (a + b);
    rep.target_y = y;

    // Fixed probe points, chosen inside the smallest domain in the schedule
    // so every row of the table measures the same states.
    const double fr[3] = {0.25, 0.5, 0.75};
    std::vector<double> probes_left, probes_right;
    for (double f : fr) {
        probes_left.push_back((a + eps_max) + f * (y - (a + eps_max)));
        probes_right.push_back(y + f * ((b - eps_max) - y));
    }

    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(m.n_phases);
    for (double eps : eps_schedule) {
        RecurrenceRow row;
        row.eps = eps;
        BvpSolution left = solve_hitting(m, a + eps, y, n_grid);
        BvpSolution right = solve_hitting(m, y, b - eps, n_grid, true);
        double mmin = 1.0;
        for (double x : probes_left) mmin = std::min(mmin, (left.at(x) * ones).minCoeff());
        for (double x : probes_right) mmin = std::min(mmin, (right.at(x) * ones).minCoeff());
        row.min_hit_mass = mmin;

        // Exit times on the same one-sided domains. Their limit is the mean
        // time to reach y, which is what stays finite under positive
        // recurrence; the exit time of the full two-sided interval grows like
        // the time to approach an unattainable boundary and diverges even in
        // the positive recurrent case.
        BvpSolution vleft = solve_exit_time(m, a + eps, y, n_grid);
        BvpSolution vright = solve_exit_time(m, y, b - eps, n_grid);
        double vmax = 0.0;
        for (double x : probes_left) vmax = std::max(vmax, vleft.at(x).maxCoeff());
        for (double x : probes_right) vmax = std::max(vmax, vright.at(x).maxCoeff());
        row.max_exit_time = vmax;
        rep.rows.push_back(row);
    }

    const auto& last = rep.rows[rep.rows.size() - 1];
    const auto& prev = rep.rows[rep.rows.size() - 2];
    const auto& prev2 = rep.rows[rep.rows.size() - 3];
    rep.extrapolated_min =
        last.min_hit_mass +
        (last.min_hit_mass - prev.min_hit_mass) * last.eps / (prev.eps - last.eps);
    rep.recurrent = rep.extrapolated_min >= 1.0 - 10.0 * last.eps;

    // Bounded exit times: the increments along the schedule must contract or
    // already be negligible against the value itself.
    const double d_last = std::abs(last.max_exit_time - prev.max_exit_time);
    const double d_prev = std::abs(prev.max_exit_time - prev2.max_exit_time);
    const bool bounded_trend = d_last <= 0.9 * d_prev || d_last <= 1e-6 * std::abs(last.max_exit_time);
    rep.positive_recurrent = rep.recurrent && bounded_trend;

    if (!rep.recurrent)
        rep.verdict = "transient (numerical)";
    else if (rep.positive_recurrent)
        rep.verdict = "recurrent and positive recurrent";
    else
        rep.verdict = "recurrent (positive recurrence not established)";
    return rep;
}

// Columns: x, then the N*N matrix entries row by row.
inline void write_bvp_csv(std::ostream& os, const BvpSolution& sol) {
    const int N = sol.values.empty() ? 0 : static_cast<int>(sol.values[0].rows());
    os << "x";
    for (int i = 1; i <= N; ++i)
        for (int j = 1; j <= N; ++j) os << ",m" << i << "_" << j;
    os << "\n";
    char buf[32];
    for (int g = 0; g < sol.grid.size(); ++g) {
        std::snprintf(buf, sizeof(buf), "%.17g", sol.grid[g]);
        os << buf;
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < N; ++j) {
                std::snprintf(buf, sizeof(buf), ",%.17g", sol.values[g](i, j));
                os << buf;
            }
        os << "\n";
    }
}

}  // namespace switchdiff
