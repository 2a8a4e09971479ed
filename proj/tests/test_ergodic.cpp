#include <doctest.h>

#include "vmstab/ergodic_lab.hpp"
#include "vmstab/numerics.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>

using namespace vmstab;

namespace {

double brute_sinc_sup(double a) {
    // |sinc| <= 1/s, so past a + 8 pi nothing beats the samples below once they exceed 1/(a + 8 pi)
    double best = 0.0;
    const int n = 4000000;
    for (int i = 0; i <= n; ++i) {
        const double s = a + 8 * kPi * i / n;
        best = std::max(best, std::abs(std::sin(s) / s));
    }
    return best;
}

}  // namespace

TEST_CASE("weights and their integrals") {
    const auto w = lorentzian_weight();
    CHECK(w.L1_norm == doctest::Approx(kPi).epsilon(1e-14));
    CHECK(w.analytic_tail);
    CHECK(w.sup_norm <= 1.0);
    CHECK(w.sup_norm > 0.99);

    // no closed-form tail: 1/(1+x^2) leaves 2/L of its mass outside
    CHECK_THROWS_AS(make_weight("slow", [](double x) { return 1.0 / (1.0 + x * x); }, 1e4), TruncationError);

    const auto g = make_weight("gauss", [](double x) { return std::exp(-x * x); }, 8.0);
    CHECK(g.L1_norm == doctest::Approx(std::sqrt(kPi)).epsilon(1e-14));
    CHECK_THROWS_AS(make_weight("neg", [](double) { return -1.0; }, 1.0), InvalidArgument);
}

TEST_CASE("predicted eigenvalues") {
    const auto p = predicted_eigs(kPi, 0.0, -2, 2);
    CHECK(p[3] == doctest::Approx(2.0));
    CHECK(p[2] == 0.0);
    for (std::size_t i = 1; i < p.size(); ++i) CHECK(p[i] - p[i - 1] == doctest::Approx(2.0));
    CHECK_THROWS_AS(predicted_eigs(kPi, 2 * kPi, 0, 1), InvalidArgument);
}

TEST_CASE("weighted operator spectrum") {
    const auto w = lorentzian_weight();
    LineDiscretization d;

    SUBCASE("periodic: even integers with a constant kernel") {
        const auto s = weighted_eigs(w, 1.0, d);
        CHECK(s.hermitian_residual <= 1e-12);
        CHECK(eigenvalue_error(s, 5, kPi) <= 1e-6);
        for (int k = -5; k <= 5; ++k) {
            double best = kInf;
            for (Index i = 0; i < s.eigenvalues.size(); ++i)
                best = std::min(best, std::abs(s.eigenvalues(i) - 2.0 * k));
            CHECK(best <= 1e-6 * std::max(1, 2 * std::abs(k)));
        }
        Index zero = 0;
        s.eigenvalues.cwiseAbs().minCoeff(&zero);
        const auto v = s.eigenvectors.col(zero);
        const Complex ref = v(0);
        CHECK((v.array() - ref).abs().maxCoeff() <= 1e-10 * std::abs(ref));
        // nodes are images of the uniform mapped grid: atan(x_j) = y_j
        for (Index j = 0; j < s.x.size(); ++j) CHECK(std::atan(s.x(j)) == doctest::Approx(s.y(j)).epsilon(1e-12));
    }
    SUBCASE("antiperiodic: odd integers") {
        const auto s = weighted_eigs(w, -1.0, d);
        CHECK(s.beta == doctest::Approx(kPi));
        CHECK(eigenvalue_error(s, 5, kPi) <= 1e-6);
        CHECK(s.eigenvalues.cwiseAbs().minCoeff() == doctest::Approx(1.0).epsilon(1e-10));
    }
    SUBCASE("generic twist and a gaussian weight") {
        const auto g = make_weight("gauss", [](double x) { return std::exp(-x * x); }, 8.0);
        const auto s = weighted_eigs(g, std::polar(1.0, 1.0), d);
        CHECK(eigenvalue_error(s, 5, std::sqrt(kPi)) <= 1e-6);
        for (Index j = 0; j < s.x.size(); ++j)
            CHECK(0.5 * std::sqrt(kPi) * std::erf(s.x(j)) == doctest::Approx(s.y(j)).epsilon(1e-12));
    }
    SUBCASE("fourth-order stencil converges at its order") {
        d.scheme = DerivativeScheme::FiniteDifference4;
        double prev = kInf;
        for (int N : {32, 64, 128, 256}) {
            d.N = N;
            const auto s = weighted_eigs(w, 1.0, d);
            CHECK(s.hermitian_residual <= 1e-12);
            const double e = eigenvalue_error(s, 5);
            CHECK(e < prev);
            if (std::isfinite(prev)) CHECK(prev / e == doctest::Approx(16.0).epsilon(0.15));
            prev = e;
        }
    }
    SUBCASE("bad input") {
        CHECK_THROWS_AS(weighted_operator(w, 1.1, d), InvalidArgument);
        d.N = 128;
        CHECK_THROWS_AS(weighted_operator(w, 1.0, d), InvalidArgument);
        d.N = 8;
        d.scheme = DerivativeScheme::FiniteDifference4;
        CHECK_THROWS_AS(weighted_operator(w, 1.0, d), InvalidArgument);
    }
}

TEST_CASE("sinc envelope against dense sampling") {
    CHECK(sinc_envelope(0.0) == 1.0);
    CHECK(sinc_envelope(-1.0) == 1.0);
    for (double a : {0.5, 3.0, 4.4, 4.6, 10.0, 100.3, 2e4}) {
        INFO("a = " << a);
        CHECK(sinc_envelope(a) == doctest::Approx(brute_sinc_sup(a)).epsilon(1e-9));
    }
    // nonincreasing
    double prev = 1.0;
    for (double a = 0.1; a < 60; a += 0.37) {
        const double s = sinc_envelope(a);
        CHECK(s <= prev);
        prev = s;
    }
}

TEST_CASE("spectral-gap ergodic rate") {
    const auto w = lorentzian_weight();
    const LineDiscretization d;
    for (double beta : {0.0, kPi}) {
        const auto s = weighted_eigs(w, std::polar(1.0, beta), d);
        const auto ser = ergodic_series_weighted(s, geometric_grid(10.0, 1e4, 61));
        CHECK(ser.kernel_dim == (beta == 0.0 ? 1 : 0));
        CHECK(ser.gap == doctest::Approx(beta == 0.0 ? 2.0 : 1.0).epsilon(1e-10));
        CHECK(ser.decay_fit_exponent == doctest::Approx(-1.0).epsilon(0.05));
        for (const auto& p : ser.points) {
            CHECK(p.operator_norm <= p.envelope + 1e-15);
            CHECK(p.envelope <= 1.0 / (ser.gap * p.T));
        }
        CHECK(ergodic_norm_weighted(s, 1e-9).operator_norm == doctest::Approx(1.0).epsilon(1e-9));
    }
    // the pointwise value is the largest |sinc| over the even integers of the grid
    const auto s = weighted_eigs(w, 1.0, d);
    for (double T : {0.3, 7.0, 123.4}) {
        double want = 0.0;
        for (int k = 1; k <= 64; ++k) want = std::max(want, std::abs(std::sin(2.0 * k * T) / (2.0 * k * T)));
        CHECK(ergodic_norm_weighted(s, T).operator_norm == doctest::Approx(want).epsilon(1e-10));
    }
    CHECK_THROWS_AS(ergodic_norm_weighted(s, 0.0), InvalidArgument);
}

TEST_CASE("lanczos spectral radius agrees with a dense solve") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    for (int n : {50, 500, 900}) {
        Matrix A(n, n);
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j) A(i, j) = nd(rng);
        A = hermitian_part(A);
        A(0, 0) += 3.0 * std::sqrt(double(n));  // separated top eigenvalue
        Eigen::SelfAdjointEigenSolver<Matrix> es(A, Eigen::EigenvaluesOnly);
        CHECK(symmetric_spectral_radius(A) == doctest::Approx(es.eigenvalues().cwiseAbs().maxCoeff()).epsilon(1e-9));
    }
}

TEST_CASE("weighted L2 ergodic norm") {
    SUBCASE("window wider than the interval: rank one") {
        // A = (1/2T) |1><1| on [-L, L], norm = (1/2T) int <x>^{-2 sigma}
        LineDiscretization d;
        d.L = 1e3;
        d.N = 512;
        d.sigma = 1.0;
        const double T = 5e3;
        CHECK(ergodic_norm_L2sigma(T, d).operator_norm ==
              doctest::Approx(2 * std::atan(d.L) / (2 * T)).epsilon(1e-4));
    }
    SUBCASE("closed-form Gram against a numerical double integral") {
        LineDiscretization d;
        d.L = 20.0;
        d.N = 16;
        d.sigma = 0.75;
        const double T = 3.0;
        const double umax = std::asinh(d.L);
        Vector e(d.N + 1);
        for (int i = 0; i <= d.N; ++i) e(i) = std::sinh(-umax + 2 * umax * i / d.N);
        e(0) = -d.L;
        e(d.N) = d.L;
        Matrix B(d.N, d.N);
        Vector m(d.N);
        const int q = 4000;
        for (int i = 0; i < d.N; ++i) {
            m(i) = integrate([&](double x) { return std::pow(1 + x * x, d.sigma); }, e(i), e(i + 1), 8, 16);
            for (int j = 0; j < d.N; ++j) {
                double s = 0.0;
                for (int k = 0; k < q; ++k) {
                    const double x = e(i) + (k + 0.5) * (e(i + 1) - e(i)) / q;
                    s += std::max(0.0, std::min(e(j + 1), x + T) - std::max(e(j), x - T));
                }
                B(i, j) = s * (e(i + 1) - e(i)) / q / (2 * T);
            }
        }
        for (int i = 0; i < d.N; ++i)
            for (int j = 0; j < d.N; ++j) B(i, j) /= std::sqrt(m(i) * m(j));
        Eigen::SelfAdjointEigenSolver<Matrix> es(hermitian_part(B), Eigen::EigenvaluesOnly);
        CHECK(ergodic_norm_L2sigma(T, d).operator_norm ==
              doctest::Approx(es.eigenvalues().cwiseAbs().maxCoeff()).epsilon(1e-6));
    }
    SUBCASE("uniform decay with weights, none without") {
        LineDiscretization d;
        d.N = 1024;
        d.sigma = 1.0;
        const std::vector<double> Ts{10.0, 1e2, 1e3, 1e4};
        const auto s1 = ergodic_series_L2sigma(Ts, d);
        for (std::size_t i = 1; i < Ts.size(); ++i)
            CHECK(s1.points[i].operator_norm <= 1.05 * s1.points[i - 1].operator_norm);
        CHECK(s1.points.back().operator_norm < 0.05);
        CHECK(s1.decay_fit_exponent <= -1.0 / 3.0 + 0.05);
        // Hilbert-Schmidt bound: ||<x>^{-1} A <x>^{-1}||_HS <= pi / (2T)
        for (const auto& p : s1.points) CHECK(p.operator_norm <= kPi / (2 * p.T) * (1 + 1e-3));

        d.sigma = 0.0;
        const auto s0 = ergodic_series_L2sigma(Ts, d);
        for (const auto& p : s0.points) CHECK(p.operator_norm >= 0.9);

        // refinement changes the sigma = 1 norms little
        d.sigma = 1.0;
        d.N = 512;
        const auto coarse = ergodic_series_L2sigma(Ts, d);
        for (std::size_t i = 0; i < Ts.size(); ++i)
            CHECK(coarse.points[i].operator_norm == doctest::Approx(s1.points[i].operator_norm).epsilon(2e-3));
    }
    LineDiscretization bad;
    bad.sigma = -1;
    CHECK_THROWS_AS(ergodic_norm_L2sigma(1.0, bad), InvalidArgument);
}

TEST_CASE("tail projectors: spectrum {0, 1} but strong convergence to zero") {
    const std::vector<int> Ns{0, 1, 3, 4, 8, 16, 32, 63};
    const auto demo = projector_demo(Ns, 64, 4);
    REQUIRE(demo.rows.size() == Ns.size());
    double prev = kInf;
    for (const auto& r : demo.rows) {
        INFO("N = " << r.N);
        CHECK(r.max_defect <= 1e-12);
        CHECK(r.ones == 64 - r.N);
        CHECK(r.zeros == r.N);
        CHECK(r.norm == doctest::Approx(1.0).epsilon(1e-12));
        if (r.N >= 4) {
            CHECK(r.finite_norm <= 1e-12);
        } else {
            CHECK(r.finite_norm > 1.0);
        }
        CHECK(r.decaying_norm < prev);
        prev = r.decaying_norm;
    }
    CHECK(demo.rows.back().decaying_norm == doctest::Approx(1.0 / 64).epsilon(1e-10));
    CHECK_THROWS_AS(projector_demo({3, 2}), InvalidArgument);
    CHECK_THROWS_AS(projector_demo({64}), InvalidArgument);
    CHECK(projector_demo_to_json(demo) == projector_demo_to_json(projector_demo(Ns, 64, 4)));
}
