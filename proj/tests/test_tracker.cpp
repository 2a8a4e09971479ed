#include <doctest.h>

#include "vmstab/tracker.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <random>
#include <sstream>

using namespace vmstab;

namespace {

EquilibriumSpec maxwellian_pair(const FieldProfile& f) {
    SpeciesParams p;
    return make_equilibrium(make_species("relativistic-maxwellian", p, +1),
                            make_species("relativistic-maxwellian", p, -1), f, {});
}

EquilibriumSpec vacuum() {
    const auto z = make_species("zero", {}, +1);
    auto zm = z;
    zm.sign = -1;
    VelocitySettings vs;
    vs.vmax = 4.0;
    return make_equilibrium(z, zm, FieldProfile::zero(2 * kPi, 8), vs);
}

}  // namespace

TEST_CASE("count_negatives") {
    Matrix d = Vector((Vector(4) << -2, -1, 0, 3).finished()).asDiagonal();
    CHECK(count_negatives(d, 1e-10) == 2);
    CHECK(count_negatives(Matrix::Identity(5, 5)) == 0);
    CHECK(count_negatives(Matrix(0, 0)) == 0);

    // Sylvester: the inertia is that of D in a pivoted LDL^T factorization
    std::mt19937_64 rng(11);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 5; ++trial) {
        Matrix A(50, 50);
        for (Index i = 0; i < 50; ++i)
            for (Index j = 0; j < 50; ++j) A(i, j) = nd(rng);
        A = hermitian_part(A);
        Eigen::LDLT<Matrix> ldlt(A);
        const int want = static_cast<int>((ldlt.vectorD().array() < 0).count());
        CHECK(count_negatives(A) == want);
    }
}

TEST_CASE("spectrum record") {
    Matrix m = Vector((Vector(3) << 2, -1, 0.5).finished()).asDiagonal();
    const auto r = spectrum_record(m, 3.0, 1);
    CHECK(r.neg == 1);
    CHECK(r.eigenvalues(0) == -1);
    CHECK(r.zero_margin == 0.5);
    CHECK(r.eps_zero == doctest::Approx(2e-9));
    std::ostringstream os;
    write_spectrum_csv(os, {r, spectrum_record(m, kInf, 1)});
    CHECK(os.str().rfind("T,n,neg,zero_margin,lambda0,lambda1,lambda2\n3,1,1,0.5,-1,0.5,2\ninf,", 0) == 0);
}

TEST_CASE("crossing of a synthetic family") {
    const auto fam = [](double T) {
        Matrix m = Matrix::Zero(2, 2);
        m(0, 0) = T - 1;
        m(1, 1) = 1;
        return m;
    };
    const auto r = find_crossing(fam, 0.25, 4.0);
    CHECK(r.neg_lo == 1);
    CHECK(r.neg_hi == 0);
    CHECK(r.T0 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.T_lo < r.T0);
    CHECK(r.T0 < r.T_hi);
    CHECK(r.eigen_residual <= 1e-8);
    CHECK(std::abs(r.u(0)) == doctest::Approx(1.0));
    CHECK_THROWS_AS(find_crossing(fam, 2.0, 4.0), NoCrossing);

    // two eigenvalues through zero at the same T
    const auto twin = [](double T) {
        Matrix m = Matrix::Identity(3, 3);
        m(0, 0) = T - 1;
        m(1, 1) = 2 * (T - 1);
        return m;
    };
    CHECK_THROWS_AS(find_crossing(twin, 0.5, 2.0), BranchAmbiguity);

    // nonlinear branch with a coupling: the kernel vector is recovered
    const auto curved = [](double T) {
        Matrix m(2, 2);
        m << std::log(T) - 0.3, 0.2, 0.2, 2.0;
        return m;
    };
    const auto c = find_crossing(curved, 0.1, 10.0);
    CHECK(c.eigen_residual <= 1e-8);
    CHECK(std::log(c.T0) - 0.3 - 0.04 / 2.0 == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("criterion for vacuum and a homogeneous maxwellian") {
    DiscretizationSpec d;
    d.K = 3;
    const auto v = check_criterion(vacuum(), d);
    CHECK(v.lhs == 0);
    CHECK(v.rhs == 0);
    CHECK_FALSE(v.unstable_predicted);

    const auto m = check_criterion(maxwellian_pair(FieldProfile::zero(2 * kPi, 16)), d);
    CHECK(m.condition_i);
    CHECK(m.kernel_dim == 1);
    CHECK(m.neg_A1 == 0);
    // A1 eigenvalues k^2 + 2 in cos/sin pairs
    CHECK(m.A1_eigenvalues(0) == doctest::Approx(3.0).epsilon(1e-8));
    CHECK(m.A1_eigenvalues(5) == doctest::Approx(11.0).epsilon(1e-8));
    CHECK(m.lhs >= 0);
    CHECK(m.rhs >= 0);
    CHECK(m.l_inf < 0);
    CHECK(m.neg_minus_l == 0);
    CHECK_FALSE(m.unstable_predicted);
    CHECK(criterion_to_json(m).find("\"unstable_predicted\": false") != std::string::npos);
}

TEST_CASE("sweep on a homogeneous maxwellian") {
    const auto eq = maxwellian_pair(FieldProfile::zero(2 * kPi, 16));
    DiscretizationSpec d;
    d.K = 4;
    const OperatorAssembler as(eq, d);
    for (int n : {2, 4, 8}) {
        SweepOptions o;
        o.n = n;
        o.allow_degenerate = true;
        o.T_grid = {1e-3, 1e-1, 1.0, 10.0, 1e3, kInf};
        const auto r = sweep(as, o);
        REQUIRE(r.records.size() == 6);
        CHECK(r.records.front().neg == n + 1);
        CHECK(r.has_infinity);
        CHECK(r.diag.consistent());
        CHECK(r.records.back().neg == r.diag.direct);
        for (const auto& rec : r.records) CHECK(rec.eigenvalues.size() == 2 * n + 1);
    }
    SweepOptions bad;
    bad.n = 2;
    bad.allow_degenerate = true;
    bad.T_grid = {1.0, 0.5};
    CHECK_THROWS_AS(sweep(as, bad), InvalidArgument);
}

TEST_CASE("sweep over a synthetic family") {
    // one eigenvalue crosses at T = 1, another is always negative: n = 1
    const auto fam = [](double T) {
        Matrix m = Matrix::Zero(3, 3);
        if (T == kInf) {
            m.diagonal() << 1, -1, 1;
        } else {
            m.diagonal() << T - 1, -1, 1;
        }
        return m;
    };
    SweepOptions o;
    o.n = 1;
    o.T_grid = {0.1, 0.5, 2.0, 4.0, kInf};
    const auto r = sweep(fam, o);
    CHECK(r.records[0].neg == 2);
    CHECK(r.records[4].neg == 1);
    REQUIRE(r.brackets.size() == 1);
    CHECK(r.brackets[0] == std::pair<double, double>(0.5, 2.0));
    CHECK(find_crossing(fam, r.brackets[0].first, r.brackets[0].second).T0 == doctest::Approx(1.0));
    o.T_grid = {2.0, kInf};
    CHECK_THROWS_AS(sweep(fam, o), SmallTAnchorFailed);
    o.check_anchor = false;
    CHECK_NOTHROW(sweep(fam, o));
}

TEST_CASE("reconstructed mode in vacuum vanishes") {
    const Vector phi = Vector::Ones(4), psi = Vector::Ones(5);
    ModeOptions o;
    o.nx = 4;
    const auto m = reconstruct_mode(phi, psi, 0.3, 2.0, vacuum(), 2, o);
    CHECK(m.f_plus.cwiseAbs().maxCoeff() == 0.0);
    CHECK(m.f_minus.cwiseAbs().maxCoeff() == 0.0);
    CHECK(m.vlasov_residual == 0.0);
}

TEST_CASE("reconstructed mode in a homogeneous plasma matches the free-streaming symbol") {
    const auto eq = maxwellian_pair(FieldProfile::zero(2 * kPi, 16));
    const int K = 2;
    const double T = 1.5, b = 0.4, P = 2 * kPi;
    Vector phi = Vector::Zero(2 * K), psi = Vector::Zero(2 * K + 1);
    phi(0) = 1.0;   // sqrt(2/P) cos x
    phi(3) = -0.5;  // sqrt(2/P) sin 2x
    psi(0) = 0.7;   // constant
    psi(1) = 0.2;   // sqrt(2/P) cos x
    ModeOptions o;
    o.nx = 8;
    o.tail_tol = 1e-3;
    const auto m = reconstruct_mode(phi, psi, b, T, eq, K, o);
    const double a = std::sqrt(2 / P), c0 = 1 / std::sqrt(P);
    double worst = 0.0, scale = 0.0;
    for (Index i = 0; i < m.grid.size(); ++i) {
        const auto z = m.grid.node(i);
        const double g = lorentz(z.v1, z.v2), u1 = z.v1 / g, u2 = z.v2 / g;
        auto Qe = [&](double k) { return std::exp(Complex(0, k * z.x)) / (1.0 + Complex(0, k * u1 * T)); };
        const double phi_x = a * std::cos(z.x) - 0.5 * a * std::sin(2 * z.x);
        const double psi_x = 0.7 * c0 + 0.2 * a * std::cos(z.x);
        const double Qg = a * Qe(1).real() - 0.5 * a * Qe(2).imag() - u2 * (0.7 * c0 + 0.2 * a * Qe(1).real()) -
                          b * u1;
        for (int sign : {+1, -1}) {
            const auto& sp = eq.species(sign);
            const auto [e, p] = invariants_of(z.x, z.v1, z.v2, eq.fields, sign);
            const double want = sign * (sp.mu_e(e, p) * phi_x + sp.mu_p(e, p) * psi_x - sp.mu_e(e, p) * Qg);
            const double got = sign > 0 ? m.f_plus(i) : m.f_minus(i);
            worst = std::max(worst, std::abs(got - want));
            scale = std::max(scale, std::abs(want));
        }
    }
    CHECK(worst <= 1e-6 * scale);
}

TEST_CASE("vlasov residual follows the finite-difference order") {
    const auto eq = maxwellian_pair(FieldProfile::cosine(2 * kPi, 16, 0.3, 0.3));
    const int K = 2;
    Vector phi(2 * K), psi(2 * K + 1);
    phi << 0.8, -0.3, 0.2, 0.1;
    psi << 0.1, 0.5, -0.4, 0.05, 0.2;
    ModeOptions o;
    o.nx = 4;
    o.points_per_panel = 3;
    o.tail_tol = 1e-3;
    o.h = 0.2;
    const auto r1 = reconstruct_mode(phi, psi, 0.3, 2.0, eq, K, o);
    o.h = 0.1;
    const auto r2 = reconstruct_mode(phi, psi, 0.3, 2.0, eq, K, o);
    CHECK(r1.norm > 0);
    CHECK(r2.vlasov_residual < r1.vlasov_residual);
    // central differences: second order
    CHECK(r1.vlasov_residual / r2.vlasov_residual == doctest::Approx(4.0).epsilon(0.1));
}
