#include <doctest.h>

#include "vmstab/averaging.hpp"

#include <cmath>
#include <sstream>

using namespace vmstab;

namespace {

EquilibriumSpec small_equilibrium(const FieldProfile& f) {
    SpeciesParams p;
    VelocitySettings vs;
    vs.tail_tol = 1e-4;
    vs.points_per_panel = 4;
    return make_equilibrium(make_species("relativistic-maxwellian", p, +1),
                            make_species("relativistic-maxwellian", p, -1), f, vs);
}

std::vector<Index> all_nodes(const PhaseGrid& g) {
    std::vector<Index> n(static_cast<std::size_t>(g.size()));
    for (Index i = 0; i < g.size(); ++i) n[static_cast<std::size_t>(i)] = i;
    return n;
}

}  // namespace

TEST_CASE("fft friendly sizes") {
    CHECK(fft_friendly_size(1) == 1);
    CHECK(fft_friendly_size(7) == 8);
    CHECK(fft_friendly_size(31) == 32);
    CHECK(fft_friendly_size(121) == 125);
}

TEST_CASE("phase grid weights match the species weight") {
    const auto eq = small_equilibrium(FieldProfile::cosine(2 * kPi, 8, 0.2, 0.1));
    const auto g = make_phase_grid(eq, 8);
    CHECK(g.size() == 8 * g.nv() * g.nv());
    for (Index i : {Index(0), g.size() / 3, g.size() - 1}) {
        const auto z = g.node(i);
        CHECK(g.weight_plus(i) == eq.plus.weight(invariants_of(z.x, z.v1, z.v2, eq.fields, +1).first));
        CHECK(g.weight_minus(i) > 0);
    }
}

TEST_CASE("free-streaming symbol") {
    const auto f = FieldProfile::zero(2 * kPi, 8);
    const auto eq = small_equilibrium(f);
    const auto grid = make_phase_grid(eq, 8);
    const double P = grid.period;
    for (int k : {1, 3}) {
        const Symbol g = [=](const PhasePoint& z) { return std::exp(Complex(0, 2 * kPi * k * z.x / P)); };
        for (double T : {0.1, 10.0}) {
            const auto s = apply_QT(g, T, grid, +1, f, {});
            double worst = 0.0;
            for (Index i = 0; i < grid.size(); ++i) {
                const auto z = grid.node(i);
                const Complex want = g(z) / (1.0 + Complex(0, 2 * kPi * k * z.v1 / lorentz(z.v1, z.v2) * T / P));
                worst = std::max(worst, std::abs(s.values(i) - want) / std::abs(want));
            }
            CHECK(worst <= 1e-6);
        }
        const auto inf = apply_Qinf(g, grid, -1, f, {});
        CHECK(inf.values.cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("constants and functions of the invariants are fixed") {
    const auto f = FieldProfile::cosine(2 * kPi, 8, 0.3, 0.2);
    const auto eq = small_equilibrium(f);
    const auto grid = make_phase_grid(eq, 8);
    const Symbol one = [](const PhasePoint&) { return Complex(1.0); };
    const auto s = apply_QT(one, 2.0, grid, +1, f, {});
    CHECK((s.values.array() - 1.0).abs().maxCoeff() <= 1e-12);
    const Symbol h = [&](const PhasePoint& z) {
        const auto [e, p] = invariants_of(z.x, z.v1, z.v2, f, -1);
        return Complex(std::exp(-e) * std::cos(p), 0.0);
    };
    const ComplexVector h0 = sample(h, grid);
    const auto qt = apply_QT(h, 3.0, grid, -1, f, {});
    const auto qi = apply_Qinf(h, grid, -1, f, {});
    CHECK((qt.values - h0).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((qi.values - h0).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("orbit averages preserve v1 parity") {
    const auto f = FieldProfile::cosine(2 * kPi, 8, 0.3, 0.2);
    const auto eq = small_equilibrium(f);
    const auto grid = make_phase_grid(eq, 8);
    const Symbol g = [](const PhasePoint& z) {
        return Complex(z.v1 / lorentz(z.v1, z.v2) * (1.0 + std::cos(z.x)) + std::sin(z.x) * z.v1, 0.0);
    };
    const auto q = apply_Qinf(g, grid, +1, f, {});
    const Index m = grid.nv();
    double worst = 0.0;
    for (Index i = 0; i < grid.size(); ++i) {
        const Index ix = i / (m * m), i1 = (i / m) % m, i2 = i % m;
        const Index j = (ix * m + (m - 1 - i1)) * m + i2;
        worst = std::max(worst, std::abs(q.values(i) + q.values(j)));
    }
    CHECK(worst <= 1e-8);
}

TEST_CASE("direct exponential average agrees with the periodic fold") {
    const auto f = FieldProfile::cosine(2 * kPi, 8, 0.3, 0.2);
    const SymbolBatch b = [](const PhasePoint& z, std::span<double> out) {
        out[0] = std::cos(z.x) * z.v1;
        out[1] = std::sin(2 * z.x) + z.v2;
    };
    AveragingConfig cfg;
    for (const PhasePoint z : {PhasePoint{0.3, 0.9, -0.4}, PhasePoint{2.0, 0.1, 0.2}}) {
        const auto s = orbit_spectrum(z, f, +1, b, 2, cfg);
        REQUIRE(s.kind == OrbitSpectrum::Kind::Periodic);
        for (double T : {0.05, 1.0, 7.0}) {
            double d[2];
            exponential_average_direct(z, T, f, +1, b, 2, cfg, d);
            for (int j = 0; j < 2; ++j) {
                double fold = 0.0;
                for (int e = s.offsets[j]; e < s.offsets[j + 1]; ++e) {
                    const double wt = 2 * kPi * s.harmonic[e] / s.tau * T;
                    fold += (s.coef[e].real() + s.coef[e].imag() * wt) / (1 + wt * wt);
                }
                CHECK(std::abs(fold - d[j]) <= 1e-8 * (1 + std::abs(fold)));
            }
        }
    }
}

TEST_CASE("contraction probe") {
    const auto zero = FieldProfile::zero(2 * kPi, 8);
    const auto g0 = make_phase_grid(small_equilibrium(zero), 8);
    CHECK(qt_operator_norm_probe(1.0, g0, +1, zero, 20) <= 1.0 + 1e-6);
    const auto f = FieldProfile::cosine(2 * kPi, 8, 0.3, 0.2);
    const auto g1 = make_phase_grid(small_equilibrium(f), 8);
    CHECK(qt_operator_norm_probe(1.0, g1, -1, f, 20) <= 1.0 + 5e-3);
}

TEST_CASE("strong limits and Lipschitz dependence on T") {
    const auto f = FieldProfile::cosine(2 * kPi, 8, 0.3, 0.2);
    const auto eq = small_equilibrium(f);
    const auto grid = make_phase_grid(eq, 8);
    const SymbolBatch b = [](const PhasePoint& z, std::span<double> out) {
        out[0] = std::cos(z.x) + 0.3 * z.v1 / lorentz(z.v1, z.v2) * std::sin(2 * z.x);
    };
    const OrbitCache cache(grid, all_nodes(grid), f, +1, b, 1, {});
    auto norm = [&](const Vector& v) {
        return weighted_norm(v.cast<Complex>(), grid, +1);
    };
    const Vector g = cache.values().col(0);
    const Vector inf = cache.apply(kInf).col(0);
    // T -> 0
    CHECK(norm(cache.apply(1e-6).col(0) - g) < 1e-4 * norm(g));
    // T -> infinity, monotone up to slack
    double prev = kInf;
    for (double T : {10.0, 1e2, 1e3, 1e4}) {
        const double d = norm(cache.apply(T).col(0) - inf);
        CHECK(d <= 1.05 * prev);
        prev = d;
    }
    CHECK(prev < 1e-2 * norm(g));
    // Lipschitz over [S/2, 2S]
    const double S = 2.0;
    const Vector qs = cache.apply(S).col(0);
    double c = 0.0;
    for (double T : {1.0, 1.5, 1.9, 2.1, 3.0, 4.0}) c = std::max(c, norm(cache.apply(T).col(0) - qs) / std::abs(T - S));
    CHECK(std::isfinite(c));
    CHECK(c < 10.0 * norm(g));
}

TEST_CASE("samples dump") {
    const auto f = FieldProfile::zero(2 * kPi, 4);
    AveragedSamples s;
    PhaseGrid g;
    g.x = Vector::Zero(1);
    g.v = {Vector::Zero(1), Vector::Ones(1)};
    s.values = ComplexVector::Constant(1, Complex(1.0, -2.0));
    std::ostringstream os;
    dump_samples_csv(os, s, g);
    CHECK(os.str() == "x,v1,v2,re,im\n0,0,0,1,-2\n");
    (void)f;
}
