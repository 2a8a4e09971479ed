#include "vmstab/ergodic_lab.hpp"

#include "vmstab/numerics.hpp"

#include <json.hpp>

#include <Eigen/Eigenvalues>
#include <boost/math/tools/toms748_solve.hpp>

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <random>
#include <sstream>

namespace vmstab {

namespace {

const QuadratureRule& gl20() {
    static const QuadratureRule r = gauss_legendre(20);
    return r;
}

double panel(const std::function<double(double)>& f, double lo, double hi) {
    const auto& r = gl20();
    double s = 0.0;
    for (Index k = 0; k < r.nodes.size(); ++k) s += r.weights(k) * f(lo + 0.5 * (hi - lo) * (r.nodes(k) + 1.0));
    return 0.5 * (hi - lo) * s;
}

// Integral over [0, X]: unit panels near the origin, then geometric growth.
double integrate_out(const std::function<double(double)>& f, double X) {
    double s = 0.0, lo = 0.0, h = 0.25;
    while (lo < X) {
        const double hi = std::min(X, lo + h);
        s += panel(f, lo, hi);
        lo = hi;
        if (lo >= 1.0) h = 0.25 * lo;
    }
    return s;
}

// x >= 0 with int_0^x f = y (f > 0); the same panel walk as integrate_out.
double invert_out(const std::function<double(double)>& f, double y) {
    if (y <= 0) return 0.0;
    double cum = 0.0, lo = 0.0, h = 0.25;
    for (int it = 0; it < 100000; ++it) {
        const double hi = lo + h;
        const double part = panel(f, lo, hi);
        if (cum + part >= y) {
            auto g = [&](double t) { return cum + panel(f, lo, t) - y; };
            std::uintmax_t iters = 200;
            const auto r = boost::math::tools::toms748_solve(g, lo, hi, cum - y, cum + part - y,
                                                             boost::math::tools::eps_tolerance<double>(50), iters);
            return 0.5 * (r.first + r.second);
        }
        cum += part;
        lo = hi;
        if (lo >= 1.0) h = 0.25 * lo;
    }
    return kInf;
}

double wrapped_beta(Complex alpha) {
    double b = std::arg(alpha);
    if (b < 0) b += 2 * kPi;
    if (b >= 2 * kPi) b -= 2 * kPi;
    return b;
}

double sinc(double s) { return s == 0.0 ? 1.0 : std::sin(s) / s; }

// Local maximum of |sin s / s| in (m pi, m pi + pi/2), m >= 1.
double sinc_peak(int m) {
    const double lo = m * kPi, hi = lo + 0.5 * kPi;
    auto f = [](double s) { return std::sin(s) - s * std::cos(s); };
    std::uintmax_t iters = 200;
    const auto r = boost::math::tools::toms748_solve(f, lo, hi, f(lo), f(hi),
                                                     boost::math::tools::eps_tolerance<double>(50), iters);
    return 0.5 * (r.first + r.second);
}

// H'' = indicator of |s| <= T, H(0) = H'(0) = 0.
double box_antiderivative(double s, double T) {
    const double a = std::abs(s);
    return a <= T ? 0.5 * a * a : T * a - 0.5 * T * T;
}

}  // namespace

double symmetric_spectral_radius(const Matrix& B) {
    const Index n = B.rows();
    if (n == 0) return 0.0;
    if (n <= 400) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(B, Eigen::EigenvaluesOnly);
        return es.eigenvalues().cwiseAbs().maxCoeff();
    }
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd;
    Vector v0(n);
    for (Index i = 0; i < n; ++i) v0(i) = nd(rng);
    double previous = -1.0;
    for (Index m = 32;; m *= 2) {
        if (2 * m >= n) {
            Eigen::SelfAdjointEigenSolver<Matrix> es(B, Eigen::EigenvaluesOnly);
            return es.eigenvalues().cwiseAbs().maxCoeff();
        }
        Matrix V(n, m);
        Vector alpha(m), beta(m);
        V.col(0) = v0.normalized();
        Index k = 0;
        for (; k < m; ++k) {
            Vector w = B * V.col(k);
            alpha(k) = V.col(k).dot(w);
            for (int pass = 0; pass < 2; ++pass) w -= V.leftCols(k + 1) * (V.leftCols(k + 1).transpose() * w);
            beta(k) = w.norm();
            if (k + 1 == m || beta(k) <= 1e-14 * std::abs(alpha(k))) {
                ++k;
                break;
            }
            V.col(k + 1) = w / beta(k);
        }
        Eigen::SelfAdjointEigenSolver<Matrix> es;
        Vector sub = beta.head(std::max<Index>(k - 1, 0));
        es.computeFromTridiagonal(alpha.head(k), sub, Eigen::EigenvaluesOnly);
        const double r = es.eigenvalues().cwiseAbs().maxCoeff();
        if (k < m || std::abs(r - previous) <= 1e-11 * r) return r;
        previous = r;
    }
}

WeightSpec make_weight(std::string name, std::function<double(double)> w, double L,
                       std::function<double(double)> tail_right, std::function<double(double)> tail_left) {
    if (!w) throw InvalidArgument("make_weight: empty weight");
    if (!(L > 0) || !std::isfinite(L)) throw InvalidArgument("make_weight: L must be positive and finite");
    WeightSpec s;
    s.name = std::move(name);
    s.w = w;
    s.L = L;
    double sup = 0.0;
    auto right = [&](double x) {
        const double v = w(x);
        if (!(v > 0) || !std::isfinite(v)) throw InvalidArgument("make_weight: w must be positive and finite");
        sup = std::max(sup, v);
        return v;
    };
    auto left = [&](double x) { return right(-x); };
    const double inner = integrate_out(right, L) + integrate_out(left, L);
    s.analytic_tail = static_cast<bool>(tail_right) && static_cast<bool>(tail_left);
    if (s.analytic_tail) {
        s.tail_right = tail_right(L);
        s.tail_left = tail_left(L);
    } else {
        s.tail_right = integrate_half_line([&](double t) { return w(L + t); }, 1e-15);
        s.tail_left = integrate_half_line([&](double t) { return w(-L - t); }, 1e-15);
    }
    s.L1_norm = inner + s.tail_left + s.tail_right;
    s.sup_norm = sup;
    if (!(s.L1_norm > 0) || !std::isfinite(s.L1_norm)) throw InvalidArgument("make_weight: w is not integrable");
    if (!s.analytic_tail && s.tail_left + s.tail_right >= 1e-8 * s.L1_norm) {
        std::ostringstream os;
        os << "mass beyond |x| = " << L << " is " << (s.tail_left + s.tail_right) / s.L1_norm
           << " of the total; enlarge L or supply the tails";
        throw TruncationError(os.str());
    }
    return s;
}

WeightSpec lorentzian_weight(double L) {
    auto tail = [](double X) { return 0.5 * kPi - std::atan(X); };
    return make_weight("lorentzian", [](double x) { return 1.0 / (1.0 + x * x); }, L, tail, tail);
}

std::string to_string(DerivativeScheme s) {
    return s == DerivativeScheme::Spectral ? "spectral" : "fd4";
}

ComplexMatrix weighted_operator(const WeightSpec& w, Complex alpha, const LineDiscretization& disc) {
    if (std::abs(std::abs(alpha) - 1.0) > 1e-12) throw InvalidArgument("weighted_operator: |alpha| must be 1");
    const int N = disc.N;
    if (N < 16) throw InvalidArgument("weighted_operator: N must be at least 16");
    const double W = w.L1_norm, h = W / N, beta = wrapped_beta(alpha);
    ComplexMatrix D = ComplexMatrix::Zero(N, N);
    if (disc.scheme == DerivativeScheme::Spectral) {
        if (N % 2 == 0) throw InvalidArgument("weighted_operator: the spectral scheme needs odd N");
        // f = e^{i beta y / W} g with g periodic: D = S D_per S^* + i beta / W
        for (int i = 0; i < N; ++i) {
            for (int j = 0; j < N; ++j) {
                if (i == j) continue;
                const int d = i - j;
                const double per = (d % 2 == 0 ? 1.0 : -1.0) * (kPi / W) / std::sin(kPi * d / N);
                D(i, j) = per * std::polar(1.0, beta * d / N);
            }
            D(i, i) = Complex(0.0, beta / W);
        }
    } else {
        // (-f_{j+2} + 8 f_{j+1} - 8 f_{j-1} + f_{j-2}) / 12h with f_{j+N} = alpha f_j
        const int off[4] = {2, 1, -1, -2};
        const double c[4] = {-1.0, 8.0, -8.0, 1.0};
        for (int i = 0; i < N; ++i) {
            for (int q = 0; q < 4; ++q) {
                const int m = i + off[q];
                Complex twist = 1.0;
                if (m >= N) twist = alpha;
                if (m < 0) twist = std::conj(alpha);
                D(i, ((m % N) + N) % N) += c[q] / (12.0 * h) * twist;
            }
        }
    }
    return Complex(0.0, -1.0) * D;
}

WeightedSpectrum weighted_eigs(const WeightSpec& w, Complex alpha, const LineDiscretization& disc) {
    WeightedSpectrum s;
    s.beta = wrapped_beta(alpha);
    s.L1_norm = w.L1_norm;
    s.scheme = disc.scheme;
    const int N = disc.N;
    const ComplexMatrix H = weighted_operator(w, alpha, disc);

    // nodes: cell midpoints of the circle y in (-(left mass), right mass)
    const double h = w.L1_norm / N;
    const double y_lo = -(integrate_out([&](double x) { return w.w(-x); }, w.L) + w.tail_left);
    s.y.resize(N);
    s.x.resize(N);
    for (int j = 0; j < N; ++j) {
        s.y(j) = y_lo + (j + 0.5) * h;
        s.x(j) = s.y(j) >= 0 ? invert_out(w.w, s.y(j)) : -invert_out([&](double x) { return w.w(-x); }, -s.y(j));
    }

    // w-inner product: sum |f_j|^2 w(x_j) dx_j = sum |f_j|^2 h, since dy = w dx
    const ComplexMatrix G = h * H;
    s.hermitian_residual = norm_inf((G - G.adjoint()).cwiseAbs()) / std::max(norm_inf(G.cwiseAbs()), 1e-300);

    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(hermitian_part(H));
    s.eigenvalues = es.eigenvalues();
    s.eigenvectors = es.eigenvectors();
    return s;
}

std::vector<double> predicted_eigs(double L1_norm, double beta, int k_lo, int k_hi) {
    if (!(L1_norm > 0)) throw InvalidArgument("predicted_eigs: L1 norm must be positive");
    if (beta < 0 || beta >= 2 * kPi) throw InvalidArgument("predicted_eigs: beta must lie in [0, 2 pi)");
    std::vector<double> out;
    for (int k = k_lo; k <= k_hi; ++k) out.push_back((beta + 2 * kPi * k) / L1_norm);
    return out;
}

double eigenvalue_error(const WeightedSpectrum& s, int kmax, double L1_norm) {
    const double W = L1_norm > 0 ? L1_norm : s.L1_norm;
    const auto pred = predicted_eigs(W, s.beta, -kmax, kmax);
    double worst = 0.0;
    for (double p : pred) {
        double best = kInf;
        for (Index i = 0; i < s.eigenvalues.size(); ++i) best = std::min(best, std::abs(s.eigenvalues(i) - p));
        worst = std::max(worst, p == 0.0 ? best : best / std::abs(p));
    }
    return worst;
}

double sinc_envelope(double a) {
    if (a <= 0) return 1.0;
    const int m = static_cast<int>(std::floor(a / kPi));
    double s = sinc_peak(std::max(m, 1));
    if (s < a) s = sinc_peak(m + 1);
    return std::max(std::abs(sinc(a)), std::abs(sinc(s)));
}

namespace {

struct Kernel {
    double tol = 0.0;
    int dim = 0;
    double gap = kInf;
};

Kernel split_kernel(const WeightedSpectrum& s) {
    Kernel k;
    const double scale = s.eigenvalues.size() ? s.eigenvalues.cwiseAbs().maxCoeff() : 0.0;
    k.tol = 1e-8 * scale;
    for (Index i = 0; i < s.eigenvalues.size(); ++i) {
        const double a = std::abs(s.eigenvalues(i));
        if (a <= k.tol) {
            ++k.dim;
        } else {
            k.gap = std::min(k.gap, a);
        }
    }
    return k;
}

double fit_positive(const std::vector<double>& T, const std::vector<double>& v) {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < T.size(); ++i)
        if (v[i] > 0) {
            x.push_back(T[i]);
            y.push_back(v[i]);
        }
    return x.size() >= 2 ? loglog_slope(x, y) : 0.0;
}

}  // namespace

FilterResult ergodic_norm_weighted(const WeightedSpectrum& s, double T) {
    if (!(T > 0)) throw InvalidArgument("ergodic_norm_weighted: T must be positive");
    const auto k = split_kernel(s);
    FilterResult r;
    r.T = T;
    for (Index i = 0; i < s.eigenvalues.size(); ++i) {
        const double l = s.eigenvalues(i);
        if (std::abs(l) > k.tol) r.operator_norm = std::max(r.operator_norm, std::abs(sinc(l * T)));
    }
    // the sup over later times only depends on the gap: sup_{s >= a} |sinc| is nonincreasing in a
    r.envelope = std::isfinite(k.gap) ? sinc_envelope(k.gap * T) : 0.0;
    return r;
}

FilterSeries ergodic_series_weighted(const WeightedSpectrum& s, const std::vector<double>& Ts) {
    FilterSeries out;
    const auto k = split_kernel(s);
    out.kernel_dim = k.dim;
    out.gap = std::isfinite(k.gap) ? k.gap : 0.0;
    std::vector<double> norm, env;
    for (double T : Ts) {
        out.points.push_back(ergodic_norm_weighted(s, T));
        norm.push_back(out.points.back().operator_norm);
        env.push_back(out.points.back().envelope);
    }
    out.decay_fit_exponent = fit_positive(Ts, env);
    out.pointwise_exponent = fit_positive(Ts, norm);
    return out;
}

FilterResult ergodic_norm_L2sigma(double T, const LineDiscretization& disc) {
    if (!(T > 0)) throw InvalidArgument("ergodic_norm_L2sigma: T must be positive");
    if (disc.sigma < 0) throw InvalidArgument("ergodic_norm_L2sigma: sigma must be nonnegative");
    if (disc.N < 16 || !(disc.L > 0)) throw InvalidArgument("ergodic_norm_L2sigma: need N >= 16 and L > 0");
    const int N = disc.N;
    const double umax = std::asinh(disc.L);
    Vector edge(N + 1);
    for (int e = 0; e <= N; ++e) edge(e) = std::sinh(-umax + 2.0 * umax * e / N);
    edge(0) = -disc.L;
    edge(N) = disc.L;

    // Gram of <x>^{2 sigma} on the cells (3-point Gauss per cell)
    const double g3 = std::sqrt(0.6);
    Vector dscale(N);
    for (int i = 0; i < N; ++i) {
        const double c = 0.5 * (edge(i) + edge(i + 1)), r = 0.5 * (edge(i + 1) - edge(i));
        auto wt = [&](double x) { return std::pow(1.0 + x * x, disc.sigma); };
        const double m = r * (5.0 * wt(c - g3 * r) + 8.0 * wt(c) + 5.0 * wt(c + g3 * r)) / 9.0;
        dscale(i) = 1.0 / std::sqrt(m);
    }

    // <chi_i, A chi_j> = (1/2T) int int_{cells} 1{|x - y| <= T}
    Matrix B(N, N);
    for (int i = 0; i < N; ++i) {
        const double a = edge(i), b = edge(i + 1);
        for (int j = i; j < N; ++j) {
            const double c = edge(j), d = edge(j + 1);
            double G;
            if (c - b >= T) {
                G = 0.0;
            } else if (d - a <= T) {
                G = (b - a) * (d - c);
            } else {
                G = box_antiderivative(b - c, T) - box_antiderivative(a - c, T) - box_antiderivative(b - d, T) +
                    box_antiderivative(a - d, T);
            }
            B(i, j) = B(j, i) = G / (2.0 * T) * dscale(i) * dscale(j);
        }
    }
    FilterResult r;
    r.T = T;
    r.operator_norm = symmetric_spectral_radius(B);
    r.envelope = r.operator_norm;
    return r;
}

FilterSeries ergodic_series_L2sigma(const std::vector<double>& Ts, const LineDiscretization& disc, int threads) {
    FilterSeries out;
    out.points.resize(Ts.size());
    parallel_for(Ts.size(), threads, [&](std::size_t i) { out.points[i] = ergodic_norm_L2sigma(Ts[i], disc); });
    std::vector<double> norm;
    for (const auto& p : out.points) norm.push_back(p.operator_norm);
    out.decay_fit_exponent = fit_positive(Ts, norm);
    out.pointwise_exponent = out.decay_fit_exponent;
    return out;
}

ProjectorDemo projector_demo(const std::vector<int>& N_list, int dim, int finite_support, unsigned seed) {
    if (dim < 2) throw InvalidArgument("projector_demo: dim must be at least 2");
    if (finite_support < 1 || finite_support > dim) throw InvalidArgument("projector_demo: bad support");
    for (std::size_t i = 0; i < N_list.size(); ++i) {
        if (N_list[i] < 0 || N_list[i] >= dim) throw InvalidArgument("projector_demo: need 0 <= N < dim");
        if (i > 0 && N_list[i] <= N_list[i - 1]) throw InvalidArgument("projector_demo: N_list must increase");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Matrix R(dim, dim);
    for (Index i = 0; i < dim; ++i)
        for (Index j = 0; j < dim; ++j) R(i, j) = nd(rng);
    const Matrix Q = Eigen::HouseholderQR<Matrix>(R).householderQ();

    Vector cf = Vector::Zero(dim), cg(dim);
    for (int k = 0; k < finite_support; ++k) cf(k) = k + 1.0;
    for (int k = 0; k < dim; ++k) cg(k) = 1.0 / (k + 1.0);
    const Vector f = Q * cf, g = Q * cg;

    ProjectorDemo out;
    out.dim = dim;
    out.finite_support = finite_support;
    for (int N : N_list) {
        const Matrix tail = Q.rightCols(dim - N);
        const Matrix pi = tail * tail.transpose();
        Eigen::SelfAdjointEigenSolver<Matrix> es(hermitian_part(pi), Eigen::EigenvaluesOnly);
        ProjectorRow row;
        row.N = N;
        for (Index i = 0; i < dim; ++i) {
            const double l = es.eigenvalues()(i);
            const double defect = std::min(std::abs(l), std::abs(l - 1.0));
            row.max_defect = std::max(row.max_defect, defect);
            if (std::abs(l - 1.0) <= 1e-10) ++row.ones;
            if (std::abs(l) <= 1e-10) ++row.zeros;
        }
        row.norm = es.eigenvalues().cwiseAbs().maxCoeff();
        row.finite_norm = (pi * f).norm();
        row.decaying_norm = (pi * g).norm();
        out.rows.push_back(row);
    }
    return out;
}

using nlohmann::json;

std::string weighted_spectrum_to_json(const WeightedSpectrum& s, int kmax) {
    json j;
    j["kind"] = "WeightedSpectrum";
    j["beta"] = s.beta;
    j["L1_norm"] = s.L1_norm;
    j["scheme"] = to_string(s.scheme);
    j["N"] = s.eigenvalues.size();
    j["hermitian_residual"] = s.hermitian_residual;
    const auto pred = predicted_eigs(s.L1_norm, s.beta, -kmax, kmax);
    json table = json::array();
    for (int k = -kmax; k <= kmax; ++k) {
        const double p = pred[k + kmax];
        double best = s.eigenvalues.size() ? s.eigenvalues(0) : 0.0;
        for (Index i = 0; i < s.eigenvalues.size(); ++i)
            if (std::abs(s.eigenvalues(i) - p) < std::abs(best - p)) best = s.eigenvalues(i);
        table.push_back({{"k", k}, {"predicted", p}, {"computed", best},
                         {"error", p == 0.0 ? std::abs(best) : std::abs(best - p) / std::abs(p)}});
    }
    j["table"] = table;
    j["eigenvalues"] = std::vector<double>(s.eigenvalues.data(), s.eigenvalues.data() + s.eigenvalues.size());
    return j.dump(2);
}

std::string filter_series_csv(const FilterSeries& s) {
    std::ostringstream os;
    os << std::setprecision(17) << "T,norm,envelope\n";
    for (const auto& p : s.points) os << p.T << ',' << p.operator_norm << ',' << p.envelope << '\n';
    return os.str();
}

std::string projector_demo_to_json(const ProjectorDemo& d) {
    json j;
    j["kind"] = "ProjectorDemo";
    j["dim"] = d.dim;
    j["finite_support"] = d.finite_support;
    json rows = json::array();
    for (const auto& r : d.rows)
        rows.push_back({{"N", r.N}, {"ones", r.ones}, {"zeros", r.zeros}, {"max_defect", r.max_defect},
                        {"norm", r.norm}, {"finite_norm", r.finite_norm}, {"decaying_norm", r.decaying_norm}});
    j["rows"] = rows;
    return j.dump(2);
}

}  // namespace vmstab
