#include <doctest.h>

#include "vmstab/operators.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace vmstab;

namespace {

EquilibriumSpec maxwellian_pair(const FieldProfile& f, double theta = 1.0) {
    SpeciesParams p;
    p.theta = theta;
    return make_equilibrium(make_species("relativistic-maxwellian", p, +1),
                            make_species("relativistic-maxwellian", p, -1), f, {});
}

// (1/theta) int mu g(v) dv for a unit-density maxwellian, in polar coordinates;
// composite Simpson in r and the periodic trapezoid in the angle.
template <class G>
double maxwellian_moment(double theta, G g) {
    const double norm = 2 * kPi * theta * (1 + theta) * std::exp(-1 / theta);
    const int nr = 4000, na = 256;
    const double rmax = 60 * theta, h = rmax / nr;
    double sum = 0.0;
    for (int i = 0; i <= nr; ++i) {
        const double r = i * h;
        const double gam = std::sqrt(1 + r * r);
        double ang = 0.0;
        for (int a = 0; a < na; ++a) {
            const double t = 2 * kPi * a / na;
            ang += g(r * std::cos(t) / gam, r * std::sin(t) / gam);
        }
        ang *= 2 * kPi / na;
        const double s = (i == 0 || i == nr) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        sum += s * std::exp(-gam / theta) * r * ang;
    }
    return sum * h / 3 / norm / theta;
}

// k of a zero-mean basis index (cos/sin pairs from k = 1)
double wavenumber(int j) { return static_cast<double>(j / 2 + 1); }

}  // namespace

TEST_CASE("fourier basis is orthonormal") {
    const double P = 3.0;
    const int K = 3, n = 64;
    Matrix G = Matrix::Zero(2 * K + 1, 2 * K + 1);
    for (int i = 0; i < n; ++i) {
        const Vector b = fourier_basis(P * i / n, P, K);
        G += (P / n) * b * b.transpose();
    }
    CHECK((G - Matrix::Identity(2 * K + 1, 2 * K + 1)).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("homogeneous limit operators") {
    const auto eq = maxwellian_pair(FieldProfile::zero(2 * kPi, 16));
    DiscretizationSpec d;
    d.K = 3;
    OperatorAssembler as(eq, d);
    const auto inf = as.assemble(kInf);
    // two species, each contributing density / theta
    const double c0 = 2.0;
    for (int j = 0; j < d.phi_dim(); ++j) {
        const double k = wavenumber(j);
        CHECK(inf.A1(j, j) == doctest::Approx(k * k + c0).epsilon(1e-8));
    }
    CHECK((inf.A1 - Matrix(inf.A1.diagonal().asDiagonal())).cwiseAbs().maxCoeff() < 1e-10);

    // k = 0 block of A2 and the corner: (1/theta) int mu v2^2 per species
    const double c2 = 2 * maxwellian_moment(1.0, [](double, double u2) { return u2 * u2; });
    CHECK(inf.A2(0, 0) == doctest::Approx(c2).epsilon(1e-7));
    CHECK(inf.l == doctest::Approx(-c2).epsilon(1e-7));
    for (int j = 1; j < d.psi_dim(); ++j) {
        const double k = j == 0 ? 0.0 : wavenumber(j - 1);
        CHECK(inf.A2(j, j) == doctest::Approx(k * k).epsilon(1e-8));
    }
    CHECK(inf.B.cwiseAbs().maxCoeff() < 1e-12);
    CHECK(inf.C.size() == d.phi_dim());
    CHECK(inf.C.cwiseAbs().maxCoeff() == 0.0);
    CHECK(inf.D.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("homogeneous finite-T A1 against the free-streaming moment") {
    const auto eq = maxwellian_pair(FieldProfile::zero(2 * kPi, 16));
    DiscretizationSpec d;
    d.K = 2;
    OperatorAssembler as(eq, d);
    const double T = 1.0;
    const auto s = as.assemble(T);
    for (int j = 0; j < d.phi_dim(); ++j) {
        const double k = wavenumber(j);
        const double want = k * k + 2 * maxwellian_moment(1.0, [&](double u1, double) {
                                const double a = k * u1 * T;
                                return a * a / (1 + a * a);
                            });
        INFO("diff " << (s.A1(j, j) - want));
        CHECK(s.A1(j, j) == doctest::Approx(want).epsilon(1e-7));
    }
    // T -> 0: the averaging collapses to the identity and A1 to the Laplacian
    const auto small = as.assemble(1e-6);
    for (int j = 0; j < d.phi_dim(); ++j)
        CHECK(small.A1(j, j) == doctest::Approx(wavenumber(j) * wavenumber(j)).epsilon(1e-9));
}

TEST_CASE("vanishing distribution leaves the Laplacian") {
    const auto z = make_species("zero", {}, +1);
    auto zm = z;
    zm.sign = -1;
    VelocitySettings vs;
    vs.vmax = 4.0;
    const auto eq = make_equilibrium(z, zm, FieldProfile::zero(2 * kPi, 8), vs);
    DiscretizationSpec d;
    d.K = 2;
    OperatorAssembler as(eq, d);
    for (double T : {0.5, kInf}) {
        const auto s = as.assemble(T);
        const auto M = build_M(s);
        const int n1 = d.phi_dim(), n2 = d.psi_dim();
        REQUIRE(M.M.rows() == n1 + n2 + 1);
        for (int j = 0; j < n1; ++j) CHECK(M.M(j, j) == doctest::Approx(-wavenumber(j) * wavenumber(j)));
        CHECK(M.M.block(0, n1, n1, n2 + 1).cwiseAbs().maxCoeff() == 0.0);
        const double corner = T == kInf ? 0.0 : -s.period / (T * T);
        CHECK(M.M(n1 + n2, n1 + n2) == doctest::Approx(corner));
        CHECK(s.A2(0, 0) == doctest::Approx(T == kInf ? 0.0 : 1 / (T * T)));
    }
}

TEST_CASE("nonhomogeneous operators are self-adjoint and consistent") {
    // built once and shared by the subcases
    static const auto eq = maxwellian_pair(FieldProfile::cosine(2 * kPi, 16, 0.3, 0.3));
    static const DiscretizationSpec d = [] {
        DiscretizationSpec s;
        s.K = 3;
        return s;
    }();
    static const OperatorAssembler as(eq, d);
    CHECK(as.skipped_orbits() == 0);

    SUBCASE("orbit quadrature reproduces the mass") {
        for (int sign : {+1, -1}) {
            const auto* q = as.quadrature(sign);
            REQUIRE(q != nullptr);
            const auto& sp = eq.species(sign);
            Vector w(static_cast<Index>(q->orbits().size()));
            for (std::size_t i = 0; i < q->orbits().size(); ++i)
                w(static_cast<Index>(i)) = q->orbits()[i].weight * sp.mu(q->orbits()[i].e, q->orbits()[i].p);
            // independent route: x-trapezoid times the tensor momentum rule
            const auto& r = eq.velocity.rule;
            const int nx = 64;
            double want = 0.0;
            for (int i = 0; i < nx; ++i) {
                const double x = 2 * kPi * i / nx;
                for (Index a = 0; a < r.nodes.size(); ++a)
                    for (Index b = 0; b < r.nodes.size(); ++b) {
                        const auto [e, p] = invariants_of(x, r.nodes(a), r.nodes(b), eq.fields, sign);
                        want += (2 * kPi / nx) * r.weights(a) * r.weights(b) * sp.mu(e, p);
                    }
            }
            CHECK(q->integrate(w) == doctest::Approx(want).epsilon(5e-6));
        }
    }

    SUBCASE("symmetry and block structure") {
        for (double T : {1e-3, 1.0, kInf}) {
            const auto s = as.assemble(T);
            CHECK(s.asymmetry_A1 <= 1e-6);
            CHECK(s.asymmetry_A2 <= 1e-6);
            CHECK(s.asymmetry_M <= 1e-6);
            const auto M = build_M(s);
            CHECK((M.M - M.M.transpose()).cwiseAbs().maxCoeff() == 0.0);
            CHECK(s.B_full.bottomRows(d.phi_dim()) == s.B);
            CHECK(s.A1_full.bottomRightCorner(d.phi_dim(), d.phi_dim()) == s.A1);
        }
        const auto inf = as.assemble(kInf);
        CHECK(inf.parity_residual < 1e-10);
        // Q^infinity commutes with functions of the invariants: <1, B h> is int psi int d mu/dp = 0
        CHECK(inf.B_full.row(0).cwiseAbs().maxCoeff() < 1e-5);
    }

    SUBCASE("A1 and A2 move monotonically toward their limits") {
        // f - Q^T f grows with T, so <f, A1 f> increases with T
        const auto a = as.assemble(0.1), b = as.assemble(10.0), c = as.assemble(kInf);
        for (int j = 0; j < d.phi_dim(); ++j) {
            CHECK(a.A1(j, j) <= b.A1(j, j) + 1e-12);
            CHECK(b.A1(j, j) <= c.A1(j, j) + 1e-12);
        }
    }

    SUBCASE("truncation") {
        const auto inf = as.assemble(kInf);
        const auto s = as.assemble(2.0);
        const auto tr = make_truncation(inf, 2);
        CHECK(tr.Pn.cols() == 2);
        CHECK((tr.Pn.transpose() * tr.Pn - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
        const auto t = truncate(s, tr);
        REQUIRE(t.Mn.rows() == 5);
        // explicit compression of the full operator
        const auto M = build_M(s);
        const int n1 = d.phi_dim(), n2 = d.psi_dim();
        Matrix W = Matrix::Zero(n1 + n2 + 1, 5);
        W.block(0, 0, n1, 2) = tr.Pn;
        W.block(n1, 2, n2, 2) = tr.Qn;
        W(n1 + n2, 4) = 1.0;
        CHECK((W.transpose() * M.M * W - t.Mn).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(truncate(s, inf, 1).Mn.rows() == 3);
        // in the limit the projected diagonal blocks are the eigenvalues
        const auto blocks = truncated_blocks(inf, tr);
        Eigen::SelfAdjointEigenSolver<Matrix> e1(inf.A1);
        CHECK(blocks.A1(0, 0) == doctest::Approx(e1.eigenvalues()(0)));
        CHECK(blocks.A1(1, 1) == doctest::Approx(e1.eigenvalues()(1)));
    }
}

TEST_CASE("truncation rejects a degenerate cutoff") {
    const auto eq = maxwellian_pair(FieldProfile::zero(2 * kPi, 16));
    DiscretizationSpec d;
    d.K = 2;
    const auto inf = assemble(kInf, eq, d);
    // the eigenvalues come in equal cos/sin pairs, in A2 after the k = 0 mode
    CHECK_THROWS_AS(make_truncation(inf, 1), DegenerateCutoff);
    CHECK_THROWS_AS(make_truncation(inf, 2), DegenerateCutoff);
    CHECK(make_truncation(inf, 2, 1e-8, true).degenerate);
}

TEST_CASE("schur complement") {
    Matrix A1(2, 2), A2(3, 3), B = Matrix::Zero(2, 3);
    A1 << 2, 0.5, 0.5, 3;
    A2 << 1, 0, 0, 0, -1, 0, 0, 0, 4;
    CHECK(schur_complement(A1, A2, B) == A2);
    B << 1, 0, 2, 0, 1, 0;
    const Matrix want = A2 + B.transpose() * A1.inverse() * B;
    CHECK((schur_complement(A1, A2, B) - want).cwiseAbs().maxCoeff() < 1e-12);
    // B reaching into the kernel of A1
    Matrix S(2, 2);
    S << 1, 0, 0, 0;
    Matrix Bk = Matrix::Zero(2, 3);
    Bk(1, 0) = 1.0;
    CHECK_THROWS_AS(schur_complement(S, A2, Bk), KernelOverlap);
}

TEST_CASE("operator JSON round trip is exact") {
    SpeciesParams sp;
    VelocitySettings vs;
    vs.tail_tol = 1e-3;
    const auto eq = make_equilibrium(make_species("relativistic-maxwellian", sp, +1),
                                     make_species("relativistic-maxwellian", sp, -1),
                                     FieldProfile::cosine(2 * kPi, 8, 0.1, 0.05), vs);
    DiscretizationSpec d;
    d.K = 2;
    OperatorAssembler as(eq, d);
    for (double T : {0.7, kInf}) {
        const auto s = as.assemble(T);
        const auto r = operator_set_from_json(operator_set_to_json(s));
        CHECK(r.T == s.T);
        CHECK(r.K == s.K);
        CHECK(r.A1 == s.A1);
        CHECK(r.A1_full == s.A1_full);
        CHECK(r.A2 == s.A2);
        CHECK(r.B == s.B);
        CHECK(r.B_full == s.B_full);
        CHECK(r.C == s.C);
        CHECK(r.D == s.D);
        CHECK(r.l == s.l);
        const auto M = build_M(s);
        const auto m = block_operator_from_json(block_operator_to_json(M));
        CHECK(m.M == M.M);
        CHECK(m.T == M.T);
    }
}

// Registered as a separate ctest entry (about a minute and a half on one core).
TEST_CASE("slow: limit coupling is orthogonal to constants under a refined orbit rule") {
    const auto eq = maxwellian_pair(FieldProfile::cosine(2 * kPi, 16, 0.1, 0.1));
    DiscretizationSpec d;
    d.K = 4;
    d.orbits.points_per_panel = 8;
    d.orbits.separatrix_levels = 12;
    d.orbits.momentum_points = 6;
    const OperatorAssembler as(eq, d);
    const auto inf = as.assemble(kInf);
    CHECK(inf.B_full.row(0).cwiseAbs().maxCoeff() <= 1e-8);
    // the same rule integrates the density: P per unit-density species
    const auto* q = as.quadrature(+1);
    Vector w(static_cast<Index>(q->orbits().size()));
    for (std::size_t i = 0; i < q->orbits().size(); ++i)
        w(static_cast<Index>(i)) = q->orbits()[i].weight * eq.plus.mu(q->orbits()[i].e, q->orbits()[i].p);
    const double vol = 2 * kPi;
    double want = 0.0;  // x-v tensor route, as in the fast test
    const auto& r = eq.velocity.rule;
    for (int i = 0; i < 64; ++i)
        for (Index a = 0; a < r.nodes.size(); ++a)
            for (Index b = 0; b < r.nodes.size(); ++b) {
                const auto [e, p] = invariants_of(vol * i / 64, r.nodes(a), r.nodes(b), eq.fields, +1);
                want += (vol / 64) * r.weights(a) * r.weights(b) * eq.plus.mu(e, p);
            }
    CHECK(q->integrate(w) == doctest::Approx(want).epsilon(1e-8));
}
