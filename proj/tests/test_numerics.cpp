#include <doctest.h>

#include "vmstab/numerics.hpp"

#include <cmath>

using namespace vmstab;

TEST_CASE("gauss-legendre integrates polynomials exactly") {
    const auto r = gauss_legendre(6, -1.0, 2.0);
    double s = 0.0;
    for (int k = 0; k < 6; ++k) s += r.weights(k) * std::pow(r.nodes(k), 11);
    CHECK(s == doctest::Approx((std::pow(2.0, 12) - 1.0) / 12.0).epsilon(1e-13));
}

TEST_CASE("graded rule reaches the tail floor on exp(-<v>)") {
    // int exp(-<v>) dv over the plane = 2 pi theta (1 + theta) e^{-1/theta} = 4 pi / e at theta = 1.
    const auto r = graded_gauss_legendre(30.0, 6);
    double s = 0.0;
    for (Index i = 0; i < r.nodes.size(); ++i)
        for (Index k = 0; k < r.nodes.size(); ++k)
            s += r.weights(i) * r.weights(k) * std::exp(-lorentz(r.nodes(i), r.nodes(k)));
    CHECK(std::abs(s / (4.0 * kPi / std::exp(1.0)) - 1.0) < 3e-9);
    for (Index i = 0; i < r.nodes.size(); ++i) CHECK(r.nodes(i) == -r.nodes(r.nodes.size() - 1 - i));
}

TEST_CASE("trigonometric interpolant derivative and inverse laplacian") {
    const int n = 16;
    const double P = 3.0;
    Vector f(n);
    for (int j = 0; j < n; ++j) f(j) = std::sin(2 * kPi * j / n) + 0.5 * std::cos(6 * kPi * j / n);
    TrigInterpolant t({f.data(), std::size_t(n)}, P);
    const double w = 2 * kPi / P;
    const Vector d = t.derivative_samples();
    const Vector u = t.inverse_laplacian_samples();
    for (int j = 0; j < n; ++j) {
        const double x = P * j / n;
        CHECK(std::abs(d(j) - (w * std::cos(w * x) - 1.5 * w * std::sin(3 * w * x))) < 1e-12);
        CHECK(std::abs(u(j) - (-std::sin(w * x) / (w * w) - 0.5 * std::cos(3 * w * x) / (9 * w * w))) < 1e-12);
    }
    CHECK(t(0.37) == doctest::Approx(std::sin(w * 0.37) + 0.5 * std::cos(3 * w * 0.37)).epsilon(1e-13));
}

TEST_CASE("hash and slope helpers") {
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);
    CHECK(hex64(255) == "00000000000000ff");
    const std::vector<double> x{1, 10, 100}, y{2, 0.2, 0.02};
    CHECK(loglog_slope(x, y) == doctest::Approx(-1.0));
}

TEST_CASE("parallel_for fills every slot and rethrows") {
    std::vector<int> v(100, 0);
    parallel_for(v.size(), 4, [&](std::size_t i) { v[i] = int(i); });
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(v[i] == int(i));
    CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
                        if (i == 7) throw InvalidArgument("boom");
                    }),
                    InvalidArgument);
}
