#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "switchdiff/core.hpp"

using namespace switchdiff;

TEST_CASE("polynomial evaluation, identity and monomial cases") {
    MatrixPolynomial p({PhaseMatrix::Identity(2, 2)});
    REQUIRE(eval_matrix_polynomial(p, 0.7).isApprox(PhaseMatrix::Identity(2, 2)));

    MatrixPolynomial q({PhaseMatrix::Zero(2, 2), PhaseMatrix::Identity(2, 2)});
    REQUIRE(eval_matrix_polynomial(q, 0.5).isApprox(0.5 * PhaseMatrix::Identity(2, 2)));
}

TEST_CASE("polynomial evaluation, scalar quadratic") {
    // 1 + 2x + 3x^2 at x=2: 1 + 4 + 12 = 17, by hand
    PhaseMatrix c0(1, 1), c1(1, 1), c2(1, 1);
    c0 << 1.0;
    c1 << 2.0;
    c2 << 3.0;
    MatrixPolynomial p({c0, c1, c2});
    REQUIRE(eval_matrix_polynomial(p, 2.0)(0, 0) == Catch::Approx(17.0).epsilon(1e-15));
}

TEST_CASE("generalized binomial examples") {
    // 2.5 * 1.5 * 0.5 / 6 = 1.875/6 = 0.3125
    REQUIRE(generalized_binomial(2.5, 3) == Catch::Approx(0.3125).epsilon(1e-15));
    REQUIRE(generalized_binomial(-0.5, 0) == 1.0);
    REQUIRE(generalized_binomial(5.0, 2) == Catch::Approx(10.0).epsilon(1e-15));
}

TEST_CASE("pochhammer examples") {
    REQUIRE(pochhammer(3.0, 0) == 1.0);
    // 1*2*3*4
    REQUIRE(pochhammer(1.0, 4) == Catch::Approx(24.0).epsilon(1e-15));
    // 0.5*1.5
    REQUIRE(pochhammer(0.5, 2) == Catch::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("pochhammer recurrence") {
    for (double a : {-2.3, -0.5, 0.0, 0.7, 3.0, 11.25}) {
        for (int n = 0; n < 12; ++n) {
            REQUIRE(pochhammer(a, n + 1) ==
                    Catch::Approx(pochhammer(a, n) * (a + n)).margin(1e-12));
        }
    }
}

TEST_CASE("generalized binomial equals falling factorial over m!") {
    for (double a : {-1.7, -0.5, 0.25, 2.5, 6.0}) {
        for (int m = 0; m < 10; ++m) {
            double falling = 1.0, fact = 1.0;
            for (int t = 0; t < m; ++t) {
                falling *= a - t;
                fact *= t + 1.0;
            }
            const double want = falling / fact;
            REQUIRE(generalized_binomial(a, m) * fact ==
                    Catch::Approx(falling).margin(1e-12 * (1.0 + std::abs(falling))));
            REQUIRE(generalized_binomial(a, m) ==
                    Catch::Approx(want).margin(1e-12 * (1.0 + std::abs(want))));
        }
    }
}

TEST_CASE("evaluation is linear in the polynomial") {
    std::mt19937 gen(41);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (int rep = 0; rep < 20; ++rep) {
        const int deg_p = 1 + rep % 4, deg_q = 1 + (rep + 2) % 4;
        MatrixPolynomial p(3), q(3);
        for (int k = 0; k <= deg_p; ++k)
            p.set_coeff(k, PhaseMatrix::NullaryExpr(3, 3, [&](int, int) { return U(gen); }));
        for (int k = 0; k <= deg_q; ++k)
            q.set_coeff(k, PhaseMatrix::NullaryExpr(3, 3, [&](int, int) { return U(gen); }));
        const double x = U(gen);
        PhaseMatrix lhs = eval_matrix_polynomial(p + q, x);
        PhaseMatrix rhs = eval_matrix_polynomial(p, x) + eval_matrix_polynomial(q, x);
        REQUIRE((lhs - rhs).cwiseAbs().maxCoeff() < 1e-13);
    }
}

TEST_CASE("normalization strips trailing zeros only") {
    MatrixPolynomial p(2);
    p.set_coeff(0, PhaseMatrix::Identity(2, 2));
    p.set_coeff(3, PhaseMatrix::Zero(2, 2));
    p.normalize();
    REQUIRE(p.degree() == 0);

    MatrixPolynomial z(2);
    z.normalize();
    REQUIRE(z.degree() == -1);
    REQUIRE(eval_matrix_polynomial(z, 0.3).isZero());
}

TEST_CASE("derivative and product agree with pointwise calculus") {
    PhaseMatrix a(2, 2), b(2, 2);
    a << 1, 2, 0, 1;
    b << 0, 1, 1, 0;
    MatrixPolynomial p({a, b, a});   // a + b x + a x^2
    MatrixPolynomial dp = p.derivative();
    const double x = 0.37, h = 1e-6;
    PhaseMatrix fd = (eval_matrix_polynomial(p, x + h) - eval_matrix_polynomial(p, x - h)) / (2 * h);
    REQUIRE((eval_matrix_polynomial(dp, x) - fd).cwiseAbs().maxCoeff() < 1e-8);

    MatrixPolynomial prod = p * p;
    PhaseMatrix want = eval_matrix_polynomial(p, x) * eval_matrix_polynomial(p, x);
    REQUIRE((eval_matrix_polynomial(prod, x) - want).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("mismatched coefficient dimensions are rejected") {
    std::vector<PhaseMatrix> bad{PhaseMatrix::Identity(2, 2), PhaseMatrix::Identity(3, 3)};
    REQUIRE_THROWS_AS(MatrixPolynomial(bad), std::invalid_argument);
    REQUIRE_THROWS_AS(pochhammer(1.0, -1), std::invalid_argument);
    REQUIRE_THROWS_AS(generalized_binomial(1.0, -2), std::invalid_argument);
}
