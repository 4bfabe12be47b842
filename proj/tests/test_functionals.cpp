#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "switchdiff/functionals.hpp"
#include "switchdiff/model.hpp"
#include "switchdiff/montecarlo.hpp"

using namespace switchdiff;

namespace {

WrightFisherParams params(double alpha, double beta, double k, int n) {
    WrightFisherParams p;
    p.alpha = alpha;
    p.beta = beta;
    p.k = k;
    p.n_phases = n;
    return p;
}

SwitchingDiffusionModel scalar_model() { return wright_fisher_model(params(0.0, 0.0, 0.5, 1)); }

}  // namespace

TEST_CASE("scalar hitting probability at the symmetric midpoint") {
    BvpSolution sol = solve_hitting(scalar_model(), 0.25, 0.75, 256);
    REQUIRE(sol.at(0.5)(0, 0) == Catch::Approx(0.5).margin(1e-4));
    REQUIRE(sol.values.front()(0, 0) == 0.0);
    REQUIRE(sol.values.back()(0, 0) == 1.0);
}

TEST_CASE("scalar hitting probability against the scale-function integral") {
    // s(t) = 1/(t(1-t)) integrates to ln(t/(1-t)); U(x) on (1/4,3/4) is
    // ln(3x/(1-x)) / ln 9. At x=0.6: ln(4.5)/ln(9).
    const double want = std::log(4.5) / std::log(9.0);
    BvpSolution sol = solve_hitting(scalar_model(), 0.25, 0.75, 500);
    REQUIRE(sol.at(0.6)(0, 0) == Catch::Approx(want).margin(1e-4));
}

TEST_CASE("hitting matrices of complementary targets partition unity") {
    SwitchingDiffusionModel m = wright_fisher_model(params(0.5, 1.0, 0.75, 3));
    BvpSolution up = solve_hitting(m, 0.2, 0.8, 300);
    BvpSolution down = solve_hitting(m, 0.2, 0.8, 300, true);
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(3);
    for (double x : {0.25, 0.5, 0.7}) {
        Eigen::VectorXd total = up.at(x) * ones + down.at(x) * ones;
        REQUIRE((total - ones).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("hitting solution entries stay inside the probability box") {
    SwitchingDiffusionModel m = wright_fisher_model(params(0.0, 0.0, 0.5, 4));
    BvpSolution sol = solve_hitting(m, 0.1, 0.9, 200);
    for (const PhaseMatrix& U : sol.values) {
        REQUIRE(U.minCoeff() >= -1e-8);
        REQUIRE(U.maxCoeff() <= 1.0 + 1e-8);
    }
}

TEST_CASE("scalar hitting solution is nondecreasing") {
    BvpSolution sol = solve_hitting(scalar_model(), 0.25, 0.75, 128);
    for (std::size_t i = 1; i < sol.values.size(); ++i)
        REQUIRE(sol.values[i](0, 0) >= sol.values[i - 1](0, 0) - 1e-12);
}

TEST_CASE("argument validation of the boundary-value solvers") {
    SwitchingDiffusionModel m = scalar_model();
    REQUIRE_THROWS_AS(solve_hitting(m, 0.0, 0.75, 64), std::invalid_argument);
    REQUIRE_THROWS_AS(solve_hitting(m, 0.5, 0.25, 64), std::invalid_argument);
    REQUIRE_THROWS_AS(solve_hitting(m, 0.25, 0.75, 8), std::invalid_argument);
}

TEST_CASE("discretization converges at second order") {
    SwitchingDiffusionModel m = wright_fisher_model(params(0.5, 1.0, 0.75, 2));
    // shared grid point x=0.5 of all three refinements
    auto value = [&](int n_grid) { return solve_hitting(m, 0.25, 0.75, n_grid).at(0.5)(0, 0); };
    const double u1 = value(32), u2 = value(64), u3 = value(128);
    const double ratio = (u1 - u2) / (u2 - u3);
    REQUIRE(ratio > 3.5);
    REQUIRE(ratio < 4.5);
}

TEST_CASE("exit time vanishes on the boundary and stays nonnegative") {
    SwitchingDiffusionModel m = wright_fisher_model(params(0.0, 0.0, 0.5, 4));
    BvpSolution sol = solve_exit_time(m, 0.2, 0.8, 300);
    REQUIRE(sol.values.front().cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(sol.values.back().cwiseAbs().maxCoeff() == 0.0);
    for (const PhaseMatrix& V : sol.values) REQUIRE(V.minCoeff() >= -1e-8);
}

TEST_CASE("exit time is linear in the running cost") {
    SwitchingDiffusionModel m = wright_fisher_model(params(0.5, 1.0, 0.75, 3));
    auto G1 = [](double) { return PhaseMatrix(PhaseMatrix::Ones(3, 3)); };
    auto G2 = [](double) { return PhaseMatrix(2.0 * PhaseMatrix::Ones(3, 3)); };
    BvpSolution v1 = solve_exit_time(m, 0.2, 0.8, G1, 200);
    BvpSolution v2 = solve_exit_time(m, 0.2, 0.8, G2, 200);
    BvpSolution vd = solve_exit_time(m, 0.2, 0.8, 200);
    for (double x : {0.3, 0.5, 0.7}) {
        REQUIRE((v2.at(x) - 2.0 * v1.at(x)).cwiseAbs().maxCoeff() < 1e-10);
        REQUIRE((vd.at(x) - v1.at(x)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("scalar mean exit time agrees with path simulation") {
    SwitchingDiffusionModel m = scalar_model();
    BvpSolution sol = solve_exit_time(m, 0.25, 0.75, 400);
    const double pde = sol.at(0.5)(0, 0);

    SimConfig cfg;
    cfg.step = 2e-4;
    cfg.horizon = 50.0;
    cfg.n_paths = 100000;
    cfg.seed = 424242;
    ExitTimeEstimate mc = estimate_mean_exit_time(m, 0.5, 1, 0.25, 0.75, cfg);
    REQUIRE(mc.censored == 0);
    // Euler paths only test the exit condition at step times, so excursions
    // across the barrier between steps go unseen and the estimate runs high
    // by O(sqrt(h)). The allowance is the barrier-shift bound
    // 0.5826*sqrt(h)*(sigma|V'| at c + at d) = 0.96*sqrt(h) for this problem;
    // the statistical term alone bounds the low side.
    REQUIRE(mc.mean - pde < 3.0 * mc.std_error + 0.96 * std::sqrt(cfg.step));
    REQUIRE(mc.mean - pde > -3.0 * mc.std_error - 2e-3);
}

TEST_CASE("phase-balance thresholds of the five-phase study") {
    TendencyReport r1 = tendency_analysis(params(0.0, 1.0, 1.25, 5));
    REQUIRE_FALSE(r1.thresholds[0].has_value());
    REQUIRE_FALSE(r1.thresholds[4].has_value());
    REQUIRE(r1.thresholds[2].has_value());
    REQUIRE(*r1.thresholds[2] == Catch::Approx(0.84615).margin(1e-3));
    REQUIRE(*r1.thresholds[3] == Catch::Approx(0.55556).margin(1e-3));
    REQUIRE(r1.regime == TendencyRegime::mixed);

    TendencyReport r2 = tendency_analysis(params(0.0, 1.0, 1.75, 5));
    REQUIRE(*r2.thresholds[1] == Catch::Approx(0.78947).margin(1e-3));
    REQUIRE(*r2.thresholds[2] == Catch::Approx(0.6).margin(1e-12));
    REQUIRE(*r2.thresholds[3] == Catch::Approx(0.39394).margin(1e-3));
    REQUIRE(r2.regime == TendencyRegime::max_backward);

    TendencyReport r3 = tendency_analysis(params(0.0, 1.0, 0.25, 5));
    REQUIRE(r3.regime == TendencyRegime::max_forward);
    for (int i = 2; i <= 4; ++i) {
        REQUIRE(r3.thresholds[i - 1].has_value());
        REQUIRE(*r3.thresholds[i - 1] > 1.0);
    }

    REQUIRE(r1.k_breakpoints == std::vector<double>{0.5, 1.0, 1.5});
}

TEST_CASE("forward and backward rates balance at each threshold") {
    for (auto p : {params(0.0, 1.0, 1.25, 5), params(0.0, 1.0, 1.75, 5),
                   params(0.7, 2.3, 1.1, 6)}) {
        TendencyReport rep = tendency_analysis(p);
        for (int i = 2; i <= p.n_phases - 1; ++i) {
            REQUIRE(rep.thresholds[i - 1].has_value());
            const double x0 = *rep.thresholds[i - 1];
            if (x0 >= 1.0) continue;  // balance point outside the interval
            REQUIRE(std::abs(wf_lambda_rate(p, i, x0) - wf_mu_rate(p, i, x0)) < 1e-12);
        }
    }
}

TEST_CASE("two phases always report forward tendency") {
    TendencyReport rep = tendency_analysis(params(0.5, 0.5, 0.75, 2));
    REQUIRE(rep.regime == TendencyRegime::max_forward);
    REQUIRE(rep.k_breakpoints.empty());
    REQUIRE_FALSE(rep.thresholds[0].has_value());
    REQUIRE_FALSE(rep.thresholds[1].has_value());
}

TEST_CASE("recurrence study of the reflecting-boundary configuration") {
    SwitchingDiffusionModel m = wright_fisher_model(params(1.0, 1.0, 0.5, 3));
    RecurrenceReport rep = classify_recurrence(m, {0.02, 0.01, 0.005});
    REQUIRE(rep.rows.size() == 3);
    for (std::size_t i = 1; i < rep.rows.size(); ++i)
        REQUIRE(rep.rows[i].min_hit_mass >= rep.rows[i - 1].min_hit_mass - 1e-9);
    REQUIRE(rep.recurrent);
    REQUIRE(rep.positive_recurrent);
    REQUIRE(rep.verdict == "recurrent and positive recurrent");
}

TEST_CASE("recurrence study flags the absorbing-boundary configuration") {
    SwitchingDiffusionModel m = wright_fisher_model(params(-0.5, 1.0, 0.5, 3));
    RecurrenceReport rep = classify_recurrence(m, {0.02, 0.01, 0.005});
    REQUIRE_FALSE(rep.recurrent);
    REQUIRE(rep.verdict == "transient (numerical)");
}

TEST_CASE("scalar diffusion with reflecting boundaries is recurrent") {
    // The alpha = beta = 0 scale function diverges only logarithmically at
    // the endpoints, so the hit mass approaches 1 like 1/log(1/eps). The
    // eps-scaled acceptance bar certifies that from a coarse schedule; a deep
    // schedule tightens the bar faster than the evidence improves.
    RecurrenceReport rep = classify_recurrence(scalar_model(), {0.24, 0.12, 0.06});
    REQUIRE(rep.recurrent);

    RecurrenceReport fine = classify_recurrence(scalar_model(), {0.02, 0.01, 0.005});
    for (std::size_t i = 1; i < fine.rows.size(); ++i)
        REQUIRE(fine.rows[i].min_hit_mass > fine.rows[i - 1].min_hit_mass);
}

TEST_CASE("recurrence schedule validation") {
    SwitchingDiffusionModel m = scalar_model();
    REQUIRE_THROWS_AS(classify_recurrence(m, {0.02, 0.01}), std::invalid_argument);
    REQUIRE_THROWS_AS(classify_recurrence(m, {0.01, 0.02, 0.005}), std::invalid_argument);
}

TEST_CASE("csv emission layout") {
    SwitchingDiffusionModel m = wright_fisher_model(params(0.0, 0.0, 0.5, 2));
    BvpSolution sol = solve_hitting(m, 0.25, 0.75, 16);
    std::ostringstream os;
    write_bvp_csv(os, sol);
    std::istringstream in(os.str());
    std::string header;
    std::getline(in, header);
    REQUIRE(header == "x,m1_1,m1_2,m2_1,m2_2");
    int rows = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++rows;
        REQUIRE(std::count(line.begin(), line.end(), ',') == 4);
    }
    REQUIRE(rows == 17);
}
