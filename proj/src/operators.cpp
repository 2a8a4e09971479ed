#include "vmstab/operators.hpp"

#include <json.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace vmstab {

Vector fourier_basis(double x, double period, int K) {
    Vector out(2 * K + 1);
    const double th = 2.0 * kPi * x / period;
    const double c1 = std::cos(th), s1 = std::sin(th);
    const double a0 = 1.0 / std::sqrt(period), a = std::sqrt(2.0 / period);
    out(0) = a0;
    double ck = 1.0, sk = 0.0;
    for (int k = 1; k <= K; ++k) {
        const double cn = ck * c1 - sk * s1;
        sk = sk * c1 + ck * s1;
        ck = cn;
        out(2 * k - 1) = a * ck;
        out(2 * k) = a * sk;
    }
    return out;
}

struct OperatorAssembler::Species {
    int sign = 1;
    std::unique_ptr<OrbitQuadrature> quad;
    Vector wa, wb;     ///< quadrature weight times mu_e, mu_p per orbit
    Matrix Sa0, Sb0;   ///< plain products, T-independent
};

OperatorAssembler::~OperatorAssembler() = default;
OperatorAssembler::OperatorAssembler(OperatorAssembler&&) noexcept = default;

OperatorAssembler::OperatorAssembler(const EquilibriumSpec& eq, const DiscretizationSpec& disc)
    : disc_(disc) {
    if (disc.K < 1) throw InvalidArgument("Fourier cutoff K must be >= 1");
    if (disc.nx < 2 * disc.K + 2)
        throw InvalidArgument("nx must be at least 2K+2 to integrate basis products exactly");
    period_ = eq.fields.period();
    fields_ = std::make_unique<FieldProfile>(eq.fields);
    grid_ = std::make_unique<PhaseGrid>(make_phase_grid(eq, disc.nx));
    vmax_ = eq.velocity.vmax;
    const int K = disc.K;
    const int count = 4 * K + 3;
    const double P = period_;

    // Symbols: basis, v2^ * basis, v1^.
    SymbolBatch batch = [P, K](const PhasePoint& z, std::span<double> out) {
        const double th = 2.0 * kPi * z.x / P;
        const double c1 = std::cos(th), s1 = std::sin(th);
        const double amp = std::sqrt(2.0 / P);
        const double g = lorentz(z.v1, z.v2);
        const double u2 = z.v2 / g;
        out[0] = 1.0 / std::sqrt(P);
        double ck = 1.0, sk = 0.0;
        for (int k = 1; k <= K; ++k) {
            const double cn = ck * c1 - sk * s1;
            sk = sk * c1 + ck * s1;
            ck = cn;
            out[2 * k - 1] = amp * ck;
            out[2 * k] = amp * sk;
        }
        for (int j = 0; j <= 2 * K; ++j) out[2 * K + 1 + j] = u2 * out[j];
        out[4 * K + 2] = z.v1 / g;
    };
    OrbitQuadratureSettings qs = disc.orbits;
    qs.prune_tol = disc.prune_tol;
    for (int s = 0; s < 2; ++s) {
        const int sign = s == 0 ? +1 : -1;
        const SpeciesProfile& prof = eq.species(sign);
        if (prof.is_zero()) continue;
        auto sp = std::make_unique<Species>();
        sp->sign = sign;
        const auto mass = [&prof](double e, double p) {
            return std::abs(prof.mu_e(e, p)) + std::abs(prof.mu_p(e, p));
        };
        sp->quad = std::make_unique<OrbitQuadrature>(eq, sign, batch, count, mass, disc.averaging, qs);
        const auto& orbits = sp->quad->orbits();
        const auto m = static_cast<Index>(orbits.size());
        sp->wa.resize(m);
        sp->wb.resize(m);
        for (Index q = 0; q < m; ++q) {
            const OrbitNode& o = orbits[static_cast<std::size_t>(q)];
            sp->wa(q) = o.weight * prof.mu_e(o.e, o.p);
            sp->wb(q) = o.weight * prof.mu_p(o.e, o.p);
        }
        sp->Sa0 = sp->quad->gram(sp->wa, 0.0);
        sp->Sb0 = sp->quad->gram(sp->wb, 0.0);
        nv_ = std::max(nv_, sp->quad->p_nodes());
        species_.push_back(std::move(sp));
    }
}

const PhaseGrid& OperatorAssembler::grid() const { return *grid_; }
double OperatorAssembler::period() const { return period_; }

Index OperatorAssembler::orbit_count() const {
    Index n = 0;
    for (const auto& s : species_) n += static_cast<Index>(s->quad->orbits().size());
    return n;
}
Index OperatorAssembler::skipped_orbits() const {
    Index n = 0;
    for (const auto& s : species_) n += s->quad->skipped();
    return n;
}
const OrbitQuadrature* OperatorAssembler::quadrature(int sign) const {
    for (const auto& s : species_)
        if (s->sign == sign) return s->quad.get();
    return nullptr;
}

namespace {
double relative_asymmetry(const Matrix& m) {
    const double n = norm_inf(m);
    return n > 0 ? norm_inf(Matrix(m - m.transpose())) / n : 0.0;
}
}  // namespace

OperatorSet OperatorAssembler::assemble(double T) const {
    if (!(T > 0)) throw InvalidArgument("assemble needs T > 0 (or infinity)");
    const int K = disc_.K, nf = 2 * K + 1;
    const double P = period_;
    Matrix lap = Matrix::Zero(nf, nf);
    for (int k = 1; k <= K; ++k) {
        const double w = 2.0 * kPi * k / P;
        lap(2 * k - 1, 2 * k - 1) = w * w;
        lap(2 * k, 2 * k) = w * w;
    }
    Matrix A1f = lap, A2 = lap;
    Matrix Bf = Matrix::Zero(nf, nf);   // (phi test incl. constant) x (psi trial)
    Matrix B2 = Matrix::Zero(nf, nf);   // (psi test) x (phi trial incl. constant)
    Vector Cf = Vector::Zero(nf), D = Vector::Zero(nf);
    double l = 0.0;
    // Symbol blocks: basis [0, nf), v2^ basis [nf, 2nf), v1^ at 2nf; rows test, columns trial.
    for (const auto& sp : species_) {
        const Matrix Sa = sp->quad->gram(sp->wa, T);
        const Matrix& Sa0 = sp->Sa0;
        const Matrix& Sb0 = sp->Sb0;
        A1f += -Sa0.topLeftCorner(nf, nf) + Sa.topLeftCorner(nf, nf);
        A2 += -Sb0.block(nf, 0, nf, nf) - Sa.block(nf, nf, nf, nf);
        Bf += Sb0.topLeftCorner(nf, nf) + Sa.block(0, nf, nf, nf);
        B2 += Sb0.topLeftCorner(nf, nf) + Sa.block(nf, 0, nf, nf);
        Cf += Sa.block(0, 2 * nf, nf, 1);
        D += Sa.block(nf, 2 * nf, nf, 1);
        l += Sa(2 * nf, 2 * nf) / P;
    }
    const bool inf = T == kInf;
    if (!inf) A2.diagonal().array() += 1.0 / (T * T);

    OperatorSet s;
    s.T = T;
    s.K = K;
    s.period = P;
    s.nv = nv_;
    s.vmax = vmax_;
    s.orbits = orbit_count();
    s.l = l;
    const int n1 = 2 * K;
    const Matrix A1raw = A1f.bottomRightCorner(n1, n1);
    s.asymmetry_A1 = relative_asymmetry(A1raw);
    s.asymmetry_A2 = relative_asymmetry(A2);
    Vector C = Cf.tail(n1);
    if (inf) {
        s.parity_residual = std::max(C.cwiseAbs().maxCoeff(), D.cwiseAbs().maxCoeff());
        C.setZero();
        D.setZero();
    }
    const double corner = inf ? P * l : -P * (1.0 / (T * T) - l);
    {
        const int dim = n1 + nf + 1;
        Matrix M(dim, dim);
        M.topLeftCorner(n1, n1) = -A1raw;
        M.block(0, n1, n1, nf) = Bf.bottomRows(n1);
        M.block(0, n1 + nf, n1, 1) = C;
        M.block(n1, 0, nf, n1) = B2.rightCols(n1);
        M.block(n1, n1, nf, nf) = A2;
        M.block(n1, n1 + nf, nf, 1) = -D;
        M.block(n1 + nf, 0, 1, n1) = C.transpose();
        M.block(n1 + nf, n1, 1, nf) = -D.transpose();
        M(dim - 1, dim - 1) = corner;
        s.asymmetry_M = relative_asymmetry(M);
    }
    s.A1_full = hermitian_part(A1f);
    s.A1 = s.A1_full.bottomRightCorner(n1, n1);
    s.A2 = hermitian_part(A2);
    s.B_full = 0.5 * (Bf + B2.transpose());
    s.B = s.B_full.bottomRows(n1);
    s.C = C;
    s.D = D;
    const double worst = std::max({s.asymmetry_A1, s.asymmetry_A2, s.asymmetry_M});
    if (worst > disc_.asymmetry_tol)
        throw AsymmetryTooLarge("pre-symmetrization residual " + std::to_string(worst) + " at T = " +
                                std::to_string(T) + " exceeds " + std::to_string(disc_.asymmetry_tol) +
                                " (refine the phase grid)");
    return s;
}

OperatorSet assemble(double T, const EquilibriumSpec& eq, const DiscretizationSpec& disc) {
    return OperatorAssembler(eq, disc).assemble(T);
}

BlockOperator build_M(const OperatorSet& s) {
    const int n1 = static_cast<int>(s.A1.rows()), nf = static_cast<int>(s.A2.rows());
    BlockOperator b;
    b.T = s.T;
    b.phi_dim = n1;
    b.psi_dim = nf;
    const int dim = n1 + nf + 1;
    b.M = Matrix::Zero(dim, dim);
    b.M.topLeftCorner(n1, n1) = -s.A1;
    b.M.block(0, n1, n1, nf) = s.B;
    b.M.block(n1, 0, nf, n1) = s.B.transpose();
    b.M.block(n1, n1, nf, nf) = s.A2;
    if (s.infinite()) {
        b.M(dim - 1, dim - 1) = s.period * s.l;
    } else {
        b.M.block(0, n1 + nf, n1, 1) = s.C;
        b.M.block(n1 + nf, 0, 1, n1) = s.C.transpose();
        b.M.block(n1, n1 + nf, nf, 1) = -s.D;
        b.M.block(n1 + nf, n1, 1, nf) = -s.D.transpose();
        b.M(dim - 1, dim - 1) = -s.period * (1.0 / (s.T * s.T) - s.l);
    }
    return b;
}

Truncation make_truncation(const OperatorSet& inf, int n, double gap_tol, bool allow_degenerate) {
    if (!inf.infinite()) throw InvalidArgument("truncation bases come from the T = infinity operators");
    const int n1 = static_cast<int>(inf.A1.rows()), nf = static_cast<int>(inf.A2.rows());
    if (n < 1 || n > n1 || n > nf)
        throw TruncationError("truncation size " + std::to_string(n) + " outside [1, " +
                              std::to_string(std::min(n1, nf)) + "]");
    Eigen::SelfAdjointEigenSolver<Matrix> e1(inf.A1), e2(inf.A2);
    Truncation tr;
    tr.n = n;
    tr.Pn = e1.eigenvectors().leftCols(n);
    tr.Qn = e2.eigenvectors().leftCols(n);
    auto gap = [&](const Vector& ev, int dim) {
        if (n >= dim) return kInf;
        return ev(n) - ev(n - 1);
    };
    tr.gap_A1 = gap(e1.eigenvalues(), n1);
    tr.gap_A2 = gap(e2.eigenvalues(), nf);
    const double s1 = std::max(1.0, e1.eigenvalues().cwiseAbs().maxCoeff());
    const double s2 = std::max(1.0, e2.eigenvalues().cwiseAbs().maxCoeff());
    tr.degenerate = tr.gap_A1 < gap_tol * s1 || tr.gap_A2 < gap_tol * s2;
    if (tr.degenerate && !allow_degenerate)
        throw DegenerateCutoff("eigenvalues " + std::to_string(n) + " and " + std::to_string(n + 1) +
                               " of the limit operators coincide (gaps " + std::to_string(tr.gap_A1) + ", " +
                               std::to_string(tr.gap_A2) + "); choose another n");
    return tr;
}

TruncatedBlocks truncated_blocks(const OperatorSet& s, const Truncation& tr) {
    TruncatedBlocks b;
    b.A1 = hermitian_part(Matrix(tr.Pn.transpose() * s.A1 * tr.Pn));
    b.A2 = hermitian_part(Matrix(tr.Qn.transpose() * s.A2 * tr.Qn));
    b.B = tr.Pn.transpose() * s.B * tr.Qn;
    b.l = s.l;
    return b;
}

TruncatedOperator truncate(const OperatorSet& s, const Truncation& tr) {
    const int n = tr.n;
    const TruncatedBlocks b = truncated_blocks(s, tr);
    TruncatedOperator t;
    t.n = n;
    t.T = s.T;
    t.Pn = tr.Pn;
    t.Qn = tr.Qn;
    t.Mn = Matrix::Zero(2 * n + 1, 2 * n + 1);
    t.Mn.topLeftCorner(n, n) = -b.A1;
    t.Mn.block(0, n, n, n) = b.B;
    t.Mn.block(n, 0, n, n) = b.B.transpose();
    t.Mn.block(n, n, n, n) = b.A2;
    if (s.infinite()) {
        t.Mn(2 * n, 2 * n) = s.period * s.l;
    } else {
        const Vector c = tr.Pn.transpose() * s.C;
        const Vector d = tr.Qn.transpose() * s.D;
        t.Mn.block(0, 2 * n, n, 1) = c;
        t.Mn.block(2 * n, 0, 1, n) = c.transpose();
        t.Mn.block(n, 2 * n, n, 1) = -d;
        t.Mn.block(2 * n, n, 1, n) = -d.transpose();
        t.Mn(2 * n, 2 * n) = -s.period * (1.0 / (s.T * s.T) - s.l);
    }
    return t;
}

TruncatedOperator truncate(const OperatorSet& s, const OperatorSet& inf, int n, double gap_tol) {
    return truncate(s, make_truncation(inf, n, gap_tol));
}

Matrix schur_complement(const Matrix& A1, const Matrix& A2, const Matrix& B) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(A1);
    const Vector& ev = es.eigenvalues();
    const Matrix& V = es.eigenvectors();
    const double smax = ev.size() ? ev.cwiseAbs().maxCoeff() : 0.0;
    Vector inv = Vector::Zero(ev.size());
    const double bnorm = std::max(1.0, norm_inf(B));
    for (Index i = 0; i < ev.size(); ++i) {
        if (std::abs(ev(i)) > 1e-10 * smax) {
            inv(i) = 1.0 / ev(i);
        } else {
            const double overlap = (V.col(i).transpose() * B).cwiseAbs().maxCoeff();
            if (overlap > 1e-8 * bnorm)
                throw KernelOverlap("coupling has a component " + std::to_string(overlap) +
                                    " in the kernel of A1; the Schur complement is undefined");
        }
    }
    const Matrix VB = V.transpose() * B;
    return hermitian_part(Matrix(A2 + VB.transpose() * inv.asDiagonal() * VB));
}

Matrix schur_infty(const OperatorSet& inf) {
    if (!inf.infinite()) throw InvalidArgument("schur_infty needs the T = infinity operators");
    return schur_complement(inf.A1, inf.A2, inf.B);
}

namespace {

using nlohmann::json;

json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        rows.push_back(std::move(r));
    }
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(rows)}};
}

Matrix matrix_from(const json& j) {
    Matrix m(j.at("rows").get<Index>(), j.at("cols").get<Index>());
    const auto& d = j.at("data");
    for (Index i = 0; i < m.rows(); ++i)
        for (Index k = 0; k < m.cols(); ++k) m(i, k) = d.at(i).at(k).get<double>();
    return m;
}

json horizon_json(double T) { return T == kInf ? json("inf") : json(T); }
double horizon_from(const json& j) { return j.is_string() ? kInf : j.get<double>(); }

}  // namespace

std::string operator_set_to_json(const OperatorSet& s) {
    json j;
    j["kind"] = "OperatorSet";
    j["T"] = horizon_json(s.T);
    j["K"] = s.K;
    j["period"] = s.period;
    j["nv"] = s.nv;
    j["vmax"] = s.vmax;
    j["orbits"] = s.orbits;
    j["l"] = s.l;
    j["asymmetry"] = {{"A1", s.asymmetry_A1}, {"A2", s.asymmetry_A2}, {"M", s.asymmetry_M}};
    j["parity_residual"] = s.parity_residual;
    j["A1"] = matrix_json(s.A1);
    j["A1_full"] = matrix_json(s.A1_full);
    j["A2"] = matrix_json(s.A2);
    j["B"] = matrix_json(s.B);
    j["B_full"] = matrix_json(s.B_full);
    j["C"] = matrix_json(s.C);
    j["D"] = matrix_json(s.D);
    return j.dump();
}

OperatorSet operator_set_from_json(const std::string& text) {
    const json j = json::parse(text);
    if (j.value("kind", "") != "OperatorSet") throw InvalidArgument("not an OperatorSet document");
    OperatorSet s;
    s.T = horizon_from(j.at("T"));
    s.K = j.at("K").get<int>();
    s.period = j.at("period").get<double>();
    s.nv = j.at("nv").get<Index>();
    s.vmax = j.at("vmax").get<double>();
    s.orbits = j.value("orbits", Index{0});
    s.l = j.at("l").get<double>();
    s.asymmetry_A1 = j.at("asymmetry").at("A1").get<double>();
    s.asymmetry_A2 = j.at("asymmetry").at("A2").get<double>();
    s.asymmetry_M = j.at("asymmetry").at("M").get<double>();
    s.parity_residual = j.at("parity_residual").get<double>();
    s.A1 = matrix_from(j.at("A1"));
    s.A1_full = matrix_from(j.at("A1_full"));
    s.A2 = matrix_from(j.at("A2"));
    s.B = matrix_from(j.at("B"));
    s.B_full = matrix_from(j.at("B_full"));
    s.C = matrix_from(j.at("C"));
    s.D = matrix_from(j.at("D"));
    return s;
}

std::string block_operator_to_json(const BlockOperator& b) {
    json j;
    j["kind"] = "BlockOperator";
    j["T"] = horizon_json(b.T);
    j["phi_dim"] = b.phi_dim;
    j["psi_dim"] = b.psi_dim;
    j["M"] = matrix_json(b.M);
    return j.dump();
}

BlockOperator block_operator_from_json(const std::string& text) {
    const json j = json::parse(text);
    if (j.value("kind", "") != "BlockOperator") throw InvalidArgument("not a BlockOperator document");
    BlockOperator b;
    b.T = horizon_from(j.at("T"));
    b.phi_dim = j.at("phi_dim").get<int>();
    b.psi_dim = j.at("psi_dim").get<int>();
    b.M = matrix_from(j.at("M"));
    return b;
}

}  // namespace vmstab
