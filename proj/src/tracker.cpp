#include "vmstab/tracker.hpp"

#include <json.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace vmstab {

double zero_threshold(const Matrix& H) { return 1e-9 * norm_inf(H); }

int count_negatives(const Matrix& H, double eps_zero) {
    if (H.size() == 0) return 0;
    Eigen::SelfAdjointEigenSolver<Matrix> es(H, Eigen::EigenvaluesOnly);
    return static_cast<int>((es.eigenvalues().array() < -eps_zero).count());
}

SpectrumRecord spectrum_record(const Matrix& M, double T, int n) {
    SpectrumRecord r;
    r.T = T;
    r.n = n;
    r.eps_zero = zero_threshold(M);
    Eigen::SelfAdjointEigenSolver<Matrix> es(M, Eigen::EigenvaluesOnly);
    r.eigenvalues = es.eigenvalues();
    r.neg = static_cast<int>((r.eigenvalues.array() < -r.eps_zero).count());
    r.zero_margin = r.eigenvalues.size() ? r.eigenvalues.cwiseAbs().minCoeff() : 0.0;
    return r;
}

CriterionReport check_criterion(const OperatorSet& inf) {
    if (!inf.infinite()) throw InvalidArgument("the criterion uses the T = infinity operators");
    CriterionReport r;
    r.l_inf = inf.l;

    Eigen::SelfAdjointEigenSolver<Matrix> full(inf.A1_full);
    const double eps_full = zero_threshold(inf.A1_full);
    for (Index i = 0; i < full.eigenvalues().size(); ++i)
        if (std::abs(full.eigenvalues()(i)) <= eps_full) {
            ++r.kernel_dim;
            r.constant_overlap = std::abs(full.eigenvectors()(0, i));  // basis function 0 is the constant
        }
    if (r.kernel_dim != 1) r.constant_overlap = 0.0;
    r.condition_i = r.kernel_dim == 1 && r.constant_overlap >= 1.0 - 1e-6;

    Eigen::SelfAdjointEigenSolver<Matrix> a1(inf.A1, Eigen::EigenvaluesOnly);
    r.A1_eigenvalues = a1.eigenvalues();
    r.neg_A1 = count_negatives(inf.A1);
    const Matrix K = schur_infty(inf);
    Eigen::SelfAdjointEigenSolver<Matrix> ks(K, Eigen::EigenvaluesOnly);
    r.schur_eigenvalues = ks.eigenvalues();
    r.lhs = count_negatives(K);
    r.neg_minus_l = inf.l > 0.0 ? 1 : 0;
    r.rhs = r.neg_A1 + r.neg_minus_l;
    r.unstable_predicted = r.condition_i && r.lhs > r.rhs;
    return r;
}

CriterionReport check_criterion(const EquilibriumSpec& eq, const DiscretizationSpec& disc) {
    return check_criterion(OperatorAssembler(eq, disc).assemble(kInf));
}

DiagL0 diag_l0(const OperatorSet& inf, const Truncation& tr) {
    if (!inf.infinite()) throw InvalidArgument("diag-l0 uses the T = infinity operators");
    const TruncatedBlocks b = truncated_blocks(inf, tr);
    const Matrix Mn = truncate(inf, tr).Mn;
    const double eps = zero_threshold(Mn);
    DiagL0 d;
    d.n = tr.n;
    d.direct = count_negatives(Mn, eps);
    Eigen::SelfAdjointEigenSolver<Matrix> a1(b.A1, Eigen::EigenvaluesOnly);
    for (Index i = 0; i < a1.eigenvalues().size(); ++i) {
        const double v = a1.eigenvalues()(i);
        if (v < -eps) ++d.neg_A1;
        else if (v <= eps) ++d.dim_ker_A1;
    }
    d.neg_K = count_negatives(schur_complement(b.A1, b.A2, b.B), eps);
    d.neg_l = inf.period * inf.l < -eps ? 1 : 0;
    d.formula = d.neg_K + tr.n - d.dim_ker_A1 - d.neg_A1 + d.neg_l;
    return d;
}

std::vector<DiagL0> diag_l0_series(const OperatorSet& inf, const std::vector<int>& ns, double gap_tol,
                                   bool allow_degenerate) {
    std::vector<DiagL0> out;
    for (int n : ns) out.push_back(diag_l0(inf, make_truncation(inf, n, gap_tol, allow_degenerate)));
    return out;
}

std::vector<double> default_T_grid() {
    auto g = geometric_grid(1e-3, 1e4, 60);
    g.push_back(kInf);
    return g;
}

namespace {

void check_grid(const std::vector<double>& grid) {
    if (grid.empty()) throw InvalidArgument("empty T grid");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!(grid[i] > 0)) throw InvalidArgument("T grid values must be positive");
        if (i && !(grid[i] > grid[i - 1])) throw InvalidArgument("T grid must be ascending");
    }
}

}  // namespace

SweepResult sweep(const std::function<Matrix(double)>& family, const SweepOptions& opt) {
    check_grid(opt.T_grid);
    SweepResult res;
    res.records.resize(opt.T_grid.size());
    parallel_for(opt.T_grid.size(), opt.threads, [&](std::size_t i) {
        res.records[i] = spectrum_record(family(opt.T_grid[i]), opt.T_grid[i], opt.n);
    });

    const auto& first = res.records.front();
    if (opt.check_anchor && first.T != kInf && first.neg != opt.n + 1) {
        std::ostringstream os;
        os << "neg(M_n^T) = " << first.neg << " at T = " << first.T << ", expected n + 1 = " << opt.n + 1
           << "; the smallest T is not below the small-T threshold";
        throw SmallTAnchorFailed(os.str());
    }
    for (std::size_t i = 0; i + 1 < res.records.size(); ++i) {
        const auto& a = res.records[i];
        const auto& b = res.records[i + 1];
        if (b.T != kInf && a.neg != b.neg) res.brackets.emplace_back(a.T, b.T);
    }
    res.has_infinity = res.records.back().T == kInf;
    return res;
}

SweepResult sweep(const OperatorAssembler& as, const SweepOptions& opt) {
    check_grid(opt.T_grid);
    const OperatorSet inf = as.assemble(kInf);
    const Truncation tr = make_truncation(inf, opt.n, opt.gap_tol, opt.allow_degenerate);
    SweepResult res = sweep([&](double T) { return truncate(T == kInf ? inf : as.assemble(T), tr).Mn; }, opt);
    res.degenerate_cutoff = tr.degenerate;
    if (res.has_infinity) res.diag = diag_l0(inf, tr);
    return res;
}

namespace {

struct Eig {
    Vector values;
    Matrix vectors;
    double eps = 0.0;
    int neg = 0;
};

Eig eig(const Matrix& M) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(M);
    Eig e;
    e.values = es.eigenvalues();
    e.vectors = es.eigenvectors();
    e.eps = zero_threshold(M);
    e.neg = static_cast<int>((e.values.array() < -e.eps).count());
    return e;
}

}  // namespace

CrossingReport find_crossing(const std::function<Matrix(double)>& family, double T_lo, double T_hi,
                             const CrossingOptions& opt) {
    if (!(T_lo > 0 && T_hi > T_lo && std::isfinite(T_hi)))
        throw InvalidArgument("crossing bracket must satisfy 0 < T_lo < T_hi < infinity");
    CrossingReport r;
    Eig lo = eig(family(T_lo)), hi = eig(family(T_hi));
    r.evaluations = 2;
    if (lo.neg == hi.neg)
        throw NoCrossing("negative counts agree at both ends (" + std::to_string(lo.neg) + ")");

    // Bisection on the negative count.
    int it = 0;
    while (T_hi - T_lo >= opt.rel_width * std::sqrt(T_lo * T_hi) && it++ < opt.max_iterations) {
        const double mid = std::sqrt(T_lo * T_hi);
        Eig m = eig(family(mid));
        ++r.evaluations;
        if (m.neg != lo.neg) {
            T_hi = mid;
            hi = std::move(m);
        } else {
            T_lo = mid;
            lo = std::move(m);
        }
    }
    r.T_lo = T_lo;
    r.T_hi = T_hi;
    r.neg_lo = lo.neg;
    r.neg_hi = hi.neg;
    if (std::abs(lo.neg - hi.neg) != 1) {
        std::ostringstream os;
        os << std::setprecision(10) << "negative count changes from " << lo.neg << " to " << hi.neg
           << " inside [" << T_lo << ", " << T_hi << "]: several branches cross together";
        throw BranchAmbiguity(os.str());
    }

    // The crossing branch is eigenvalue min(neg) in ascending order on both ends.
    const Index b = std::min(lo.neg, hi.neg);
    r.branch_overlap = std::abs(lo.vectors.col(b).dot(hi.vectors.col(b)));
    // Regula falsi (Illinois) on the branch eigenvalue inside the bracket.
    double a = T_lo, fa = lo.values(b), c = T_hi, fc = hi.values(b);
    double T0 = std::abs(fa) < std::abs(fc) ? a : c;
    Eig best = std::abs(fa) < std::abs(fc) ? lo : hi;
    int side = 0;
    for (int k = 0; k < 60 && std::abs(best.values(b)) > 1e-2 * opt.eigen_tol; ++k) {
        if (fa == fc) break;
        double t = (a * fc - c * fa) / (fc - fa);
        if (!(t > a && t < c)) t = 0.5 * (a + c);
        Eig m = eig(family(t));
        ++r.evaluations;
        const double ft = m.values(b);
        T0 = t;
        best = std::move(m);
        if ((ft < 0) == (fa < 0)) {
            a = t;
            fa = ft;
            if (side == -1) fc *= 0.5;
            side = -1;
        } else {
            c = t;
            fc = ft;
            if (side == 1) fa *= 0.5;
            side = 1;
        }
        if (c - a < 1e-15 * c) break;
    }
    r.T0 = T0;
    Vector u = best.vectors.col(b);
    Index big = 0;
    u.cwiseAbs().maxCoeff(&big);
    if (u(big) < 0) u = -u;
    r.u = u;
    r.eigenvalue = best.values(b);
    const Matrix M0 = family(T0);
    ++r.evaluations;
    r.eigen_residual = (M0 * u).norm() / u.norm();
    if (!(r.T_lo < r.T0 && r.T0 < r.T_hi)) {
        // A crossing exactly at an end of the bracket: keep T0 inside.
        r.T_lo = std::min(r.T_lo, r.T0 * (1 - 1e-12));
        r.T_hi = std::max(r.T_hi, r.T0 * (1 + 1e-12));
    }
    return r;
}

CrossingReport find_crossing(const OperatorAssembler& as, const Truncation& tr, double T_lo, double T_hi,
                             const CrossingOptions& opt) {
    CrossingReport r =
        find_crossing([&](double T) { return truncate(as.assemble(T), tr).Mn; }, T_lo, T_hi, opt);
    const int n = tr.n;
    r.n = n;
    r.phi = tr.Pn * r.u.head(n);
    r.psi = tr.Qn * r.u.segment(n, n);
    r.b = r.u(2 * n);
    return r;
}

ModeSamples reconstruct_mode(const Vector& phi, const Vector& psi, double b, double T0, const EquilibriumSpec& eq,
                             int K, const ModeOptions& opt) {
    if (phi.size() != 2 * K || psi.size() != 2 * K + 1) throw InvalidArgument("mode coefficients do not match K");
    if (!(T0 > 0 && std::isfinite(T0))) throw InvalidArgument("mode horizon must be finite and positive");
    if (!(opt.h > 0)) throw InvalidArgument("finite-difference step must be positive");

    EquilibriumSpec deq = eq;
    VelocitySettings vs;
    vs.tail_tol = opt.tail_tol;
    vs.points_per_panel = opt.points_per_panel;
    deq.velocity = make_velocity_quadrature(eq.plus, eq.minus, eq.fields, vs);
    ModeSamples out;
    out.grid = make_phase_grid(deq, opt.nx);
    const PhaseGrid& grid = out.grid;
    const double P = grid.period;
    const double kap = 2.0 * kPi / P;

    // phi, psi and their x-derivatives at x.
    auto fields_at = [&](double x) {
        const Vector e = fourier_basis(x, P, K);
        Vector d = Vector::Zero(e.size());
        for (int k = 1; k <= K; ++k) {
            d(2 * k - 1) = -kap * k * e(2 * k);
            d(2 * k) = kap * k * e(2 * k - 1);
        }
        return std::array<double, 4>{phi.dot(e.tail(2 * K)), psi.dot(e), phi.dot(d.tail(2 * K)), psi.dot(d)};
    };
    const SymbolBatch batch = [&](const PhasePoint& z, std::span<double> o) {
        const double g = lorentz(z.v1, z.v2);
        const auto f = fields_at(z.x);
        o[0] = f[0] - z.v2 / g * f[1] - b * z.v1 / g;
    };

    double sq = 0.0, norm_sq = 0.0;
    for (int sign : {+1, -1}) {
        const SpeciesProfile& sp = eq.species(sign);
        Vector f = Vector::Zero(grid.size());
        Vector res = Vector::Zero(grid.size());
        std::vector<char> direct(static_cast<std::size_t>(grid.size()), 0);
        if (!sp.is_zero()) {
            const Characteristics ch(eq.fields, sign);
            const double s = sign;
            parallel_for(static_cast<std::size_t>(grid.size()), opt.threads, [&](std::size_t i) {
                const PhasePoint z = grid.node(static_cast<Index>(i));
                const OrbitSpectrum spec = orbit_spectrum(z, eq.fields, sign, batch, 1, opt.averaging);
                auto Q = [&](const PhasePoint& y, double t) {
                    if (spec.kind != OrbitSpectrum::Kind::Direct) return average_along(spec, 0, T0, t);
                    double v = 0.0;
                    exponential_average_direct(y, T0, eq.fields, sign, batch, 1, opt.averaging, {&v, 1});
                    return v;
                };
                auto f_at = [&](const PhasePoint& y, double t) {
                    const auto [e, p] = ch.invariants(y);
                    const auto fl = fields_at(y.x);
                    return s * sp.mu_e(e, p) * fl[0] + s * sp.mu_p(e, p) * fl[1] - s * sp.mu_e(e, p) * Q(y, t);
                };
                const bool still = spec.kind == OrbitSpectrum::Kind::Stationary;
                const PhasePoint zp = still ? z : rk_step(ch, z, opt.h, 6);
                const PhasePoint zm = still ? z : rk_step(ch, z, -opt.h, 6);
                const double f0 = f_at(z, 0.0);
                const double Df = (f_at(zp, opt.h) - f_at(zm, -opt.h)) / (2.0 * opt.h);
                const auto [e, p] = ch.invariants(z);
                const double me = sp.mu_e(e, p), mp = sp.mu_p(e, p);
                const double g = lorentz(z.v1, z.v2), u1 = z.v1 / g, u2 = z.v2 / g;
                const auto fl = fields_at(z.x);
                const double rhs = s * me * u1 * (fl[2] + b / T0) + s * mp * u1 * fl[3] +
                                   s / T0 * (me * u2 + mp) * fl[1];
                f(static_cast<Index>(i)) = f0;
                res(static_cast<Index>(i)) = f0 / T0 + Df - rhs;
                direct[i] = spec.kind == OrbitSpectrum::Kind::Direct;
            });
        }
        out.direct_nodes += std::count(direct.begin(), direct.end(), 1);
        const Vector& w = grid.weight(sign);
        double r2 = 0.0, n2 = 0.0;
        for (Index i = 0; i < grid.size(); ++i) {
            r2 += grid.cell(i) * w(i) * res(i) * res(i);
            n2 += grid.cell(i) * w(i) * f(i) * f(i);
        }
        sq += r2;
        norm_sq += n2;
        (sign > 0 ? out.residual_plus : out.residual_minus) = std::sqrt(r2);
        (sign > 0 ? out.f_plus : out.f_minus) = std::move(f);
    }
    out.vlasov_residual = std::sqrt(sq);
    out.norm = std::sqrt(norm_sq);
    return out;
}

namespace {

using nlohmann::json;

json vector_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

}  // namespace

void write_spectrum_csv(std::ostream& os, const std::vector<SpectrumRecord>& records) {
    std::size_t width = 0;
    for (const auto& r : records) width = std::max(width, static_cast<std::size_t>(r.eigenvalues.size()));
    os << "T,n,neg,zero_margin";
    for (std::size_t k = 0; k < width; ++k) os << ",lambda" << k;
    os << "\n" << std::setprecision(17);
    for (const auto& r : records) {
        if (r.T == kInf) os << "inf";
        else os << r.T;
        os << "," << r.n << "," << r.neg << "," << r.zero_margin;
        for (Index k = 0; k < r.eigenvalues.size(); ++k) os << "," << r.eigenvalues(k);
        os << "\n";
    }
}

std::string criterion_to_json(const CriterionReport& r) {
    json j;
    j["kind"] = "CriterionReport";
    j["condition_i"] = r.condition_i;
    j["kernel_dim"] = r.kernel_dim;
    j["constant_overlap"] = r.constant_overlap;
    j["lhs"] = r.lhs;
    j["rhs"] = r.rhs;
    j["neg_A1"] = r.neg_A1;
    j["neg_minus_l"] = r.neg_minus_l;
    j["unstable_predicted"] = r.unstable_predicted;
    j["l_inf"] = r.l_inf;
    j["schur_eigenvalues"] = vector_json(r.schur_eigenvalues);
    j["A1_eigenvalues"] = vector_json(r.A1_eigenvalues);
    return j.dump(2);
}

std::string crossing_to_json(const CrossingReport& r) {
    json j;
    j["kind"] = "CrossingReport";
    j["T0"] = r.T0;
    j["bracket"] = {r.T_lo, r.T_hi};
    j["neg"] = {r.neg_lo, r.neg_hi};
    j["n"] = r.n;
    j["mode"] = {{"phi", vector_json(r.phi)}, {"psi", vector_json(r.psi)}, {"b", r.b}};
    j["u"] = vector_json(r.u);
    j["eigenvalue"] = r.eigenvalue;
    j["eigen_residual"] = r.eigen_residual;
    j["branch_overlap"] = r.branch_overlap;
    j["vlasov_residual"] = r.vlasov_residual;
    j["evaluations"] = r.evaluations;
    return j.dump(2);
}

std::string diag_l0_to_json(const DiagL0& d) {
    json j;
    j["n"] = d.n;
    j["neg_K"] = d.neg_K;
    j["dim_ker_A1"] = d.dim_ker_A1;
    j["neg_A1"] = d.neg_A1;
    j["neg_l"] = d.neg_l;
    j["formula"] = d.formula;
    j["direct"] = d.direct;
    return j.dump(2);
}

}  // namespace vmstab
