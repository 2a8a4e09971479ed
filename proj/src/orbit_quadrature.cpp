#include "vmstab/orbit_quadrature.hpp"

#include "vmstab/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace vmstab {

double effective_potential(double x, double p, const FieldProfile& fields, int sign) {
    const auto [phi, psi] = fields.potentials(x);
    const double v2 = p - sign * psi;
    return sign * phi + std::sqrt(1.0 + v2 * v2);
}

namespace {

struct Critical {
    double x = 0.0;
    double value = 0.0;
    bool maximum = false;
};

/// Golden-section refinement of an extremum bracketed by [a, b].
Critical refine(const std::function<double(double)>& f, double a, double b, bool maximum) {
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    const double s = maximum ? -1.0 : 1.0;
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = s * f(c), fd = s * f(d);
    for (int it = 0; it < 80 && b - a > 1e-13 * (1.0 + std::abs(a)); ++it) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = s * f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = s * f(d);
        }
    }
    const double x = 0.5 * (a + b);
    return {x, f(x), maximum};
}

/// Rule for int_0^S ds on panels of width <= max_width, with the end panels
/// split geometrically toward the flagged ends.
QuadratureRule graded_rule(double S, bool grade_lo, bool grade_hi, const OrbitQuadratureSettings& s) {
    const int N = std::max(1, static_cast<int>(std::ceil(S / s.panel_width - 1e-12)));
    const double h = S / N;
    const double r = s.separatrix_ratio;
    const int L = s.separatrix_levels;
    std::vector<double> edges{0.0};
    if (grade_lo)
        for (int k = L; k >= 1; --k) edges.push_back(h * std::pow(r, k));
    for (int i = 1; i < N; ++i) edges.push_back(h * i);
    if (grade_hi)
        for (int k = 1; k <= L; ++k) edges.push_back(S - h * std::pow(r, k));
    edges.push_back(S);
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    const QuadratureRule gl = gauss_legendre(s.points_per_panel);
    QuadratureRule out;
    const auto panels = static_cast<Index>(edges.size()) - 1;
    out.nodes.resize(panels * gl.nodes.size());
    out.weights.resize(out.nodes.size());
    Index k = 0;
    for (Index i = 0; i < panels; ++i) {
        const double lo = edges[static_cast<std::size_t>(i)], hi = edges[static_cast<std::size_t>(i + 1)];
        for (Index j = 0; j < gl.nodes.size(); ++j, ++k) {
            out.nodes(k) = 0.5 * (lo + hi) + 0.5 * (hi - lo) * gl.nodes(j);
            out.weights(k) = 0.5 * (hi - lo) * gl.weights(j);
        }
    }
    return out;
}

struct Candidate {
    OrbitNode node;
    double tau_estimate = 0.0;
    double time_scale = 0.0;    ///< shortest dynamical time along the orbit
    double contribution = 0.0;  ///< |weight| * mass * tau_estimate
};

struct ScanPoint {
    double x = 0.0;
    double u = 0.0;    ///< effective potential
    double phi = 0.0;  ///< sign * phi0
};

/// 1 / |v1^| at a scan point for energy e (R = v1^2).
double inverse_speed(const ScanPoint& q, double e) {
    const double R = (e - q.u) * (e + q.u - 2.0 * q.phi);
    return R > 0 ? (e - q.phi) / std::sqrt(R) : 0.0;
}

}  // namespace

OrbitQuadrature::OrbitQuadrature(const EquilibriumSpec& eq, int sign, SymbolBatch batch, int count,
                                 const std::function<double(double, double)>& mass,
                                 const AveragingConfig& cfg, const OrbitQuadratureSettings& s)
    : count_(count) {
    const FieldProfile& fields = eq.fields;
    const double P = fields.period();
    const double vmax = eq.velocity.vmax;
    const double e_top = std::sqrt(1.0 + vmax * vmax) + fields.max_abs_phi();
    const double pmax = vmax + fields.max_abs_psi();
    const QuadratureRule prule = graded_gauss_legendre(pmax, s.momentum_points > 0 ? s.momentum_points : s.points_per_panel);
    p_nodes_ = prule.nodes.size();

    const int M = std::max(16, s.scan_points);
    // Length over which the fields vary.
    double pot = 0.0, force = 0.0;
    for (int i = 0; i < M; ++i) {
        const auto [phi, psi] = fields.potentials(P * i / M);
        const auto [e1, b0] = fields.forces(P * i / M);
        pot = std::max(pot, std::abs(phi) + std::abs(psi));
        force = std::max(force, std::abs(e1) + std::abs(b0));
    }
    const double field_length = force > 0 ? pot / force : P / (2.0 * kPi);
    const Characteristics ch(fields, sign);
    std::vector<Candidate> cand;

    for (Index ip = 0; ip < prule.nodes.size(); ++ip) {
        const double p = prule.nodes(ip);
        const auto U = [&](double x) { return effective_potential(x, p, fields, sign); };
        std::vector<double> xs(M), us(M);
        for (int i = 0; i < M; ++i) {
            xs[static_cast<std::size_t>(i)] = P * i / M;
            us[static_cast<std::size_t>(i)] = U(xs[static_cast<std::size_t>(i)]);
        }
        const auto [umin_it, umax_it] = std::minmax_element(us.begin(), us.end());
        const bool flat = *umax_it - *umin_it <= 1e-12 * (1.0 + std::abs(*umax_it));

        std::vector<Critical> crit;
        if (!flat) {
            for (int i = 0; i < M; ++i) {
                const double l = us[static_cast<std::size_t>((i + M - 1) % M)];
                const double c = us[static_cast<std::size_t>(i)];
                const double r = us[static_cast<std::size_t>((i + 1) % M)];
                const double a = xs[static_cast<std::size_t>(i)] - P / M, b = xs[static_cast<std::size_t>(i)] + P / M;
                if (c <= l && c < r) crit.push_back(refine(U, a, b, false));
                if (c >= l && c > r) crit.push_back(refine(U, a, b, true));
            }
        }
        double e_min = *umin_it;
        double x_min = xs[static_cast<std::size_t>(umin_it - us.begin())];
        for (const auto& c : crit)
            if (!c.maximum && c.value < e_min) {
                e_min = c.value;
                x_min = c.x;
            }
        if (e_min >= e_top) continue;

        // Energy breakpoints: every critical value strictly inside (e_min, e_top).
        std::vector<double> breaks;
        for (const auto& c : crit)
            if (c.value > e_min + 1e-12 * (1.0 + std::abs(e_min)) && c.value < e_top) breaks.push_back(c.value);
        std::sort(breaks.begin(), breaks.end());
        breaks.erase(std::unique(breaks.begin(), breaks.end(),
                                 [](double a, double b) { return b - a <= 1e-12 * (1.0 + std::abs(a)); }),
                     breaks.end());
        std::vector<double> ends{e_min};
        ends.insert(ends.end(), breaks.begin(), breaks.end());
        ends.push_back(e_top);

        // Scan points plus the exact extrema, sorted in x, for the component search.
        std::vector<ScanPoint> pts;
        for (int i = 0; i < M; ++i) pts.push_back({xs[static_cast<std::size_t>(i)], us[static_cast<std::size_t>(i)], 0.0});
        for (const auto& c : crit) pts.push_back({std::fmod(std::fmod(c.x, P) + P, P), c.value, 0.0});
        std::sort(pts.begin(), pts.end(), [](const ScanPoint& a, const ScanPoint& b) { return a.x < b.x; });
        for (auto& q : pts) q.phi = sign * fields.potentials(q.x).first;

        for (std::size_t iv = 0; iv + 1 < ends.size(); ++iv) {
            const double lo = ends[iv], hi = ends[iv + 1];
            // e = lo + t^2 removes the inverse square root of flat potentials at lo. A flat
            // potential also has passing orbits of vanishing frequency there, so kappa(T)
            // varies on a scale of 1/T near lo.
            const QuadratureRule srule = graded_rule(std::sqrt(hi - lo), iv > 0 || flat, iv + 2 < ends.size(), s);
            for (Index is = 0; is < srule.nodes.size(); ++is) {
                const double t = srule.nodes(is);
                const double e = lo + t * t;
                const double w = prule.weights(ip) * srule.weights(is) * 2.0 * t;

                auto start_at = [&](double x, double dir) {
                    const auto [phi, psi] = fields.potentials(x);
                    const double g = e - sign * phi, v2 = p - sign * psi;
                    const double R = g * g - 1.0 - v2 * v2;
                    return PhasePoint{x, dir * std::sqrt(std::max(R, 0.0)), v2};
                };
                // min(L / max|v1^|, max v1 / max|dv/dt|) over the points [i, j] of a component.
                auto time_scale = [&](std::size_t i, std::size_t j) {
                    double u1 = 0.0, v1 = 0.0, acc = 0.0;
                    for (std::size_t k = i;; k = (k + 1) % pts.size()) {
                        const double R = (e - pts[k].u) * (e + pts[k].u - 2.0 * pts[k].phi);
                        const PhasePoint z{pts[k].x, std::sqrt(std::max(R, 0.0)),
                                           p - sign * fields.potentials(pts[k].x).second};
                        const PhasePoint f = ch.velocity(z);
                        u1 = std::max(u1, std::abs(f.x));
                        v1 = std::max(v1, z.v1);
                        acc = std::max(acc, std::hypot(f.v1, f.v2));
                        if (k == j) break;
                    }
                    double t = u1 > 0 ? field_length / u1 : kInf;
                    if (acc > 0) t = std::min(t, v1 / acc);
                    return t;
                };
                double scale = 0.0;
                auto push = [&](const PhasePoint& z, bool trapped, double tau) {
                    if (z.v1 == 0.0) return;
                    Candidate c;
                    c.node.e = e;
                    c.node.p = p;
                    c.node.weight = w;
                    c.node.trapped = trapped;
                    c.node.start = z;
                    c.tau_estimate = tau;
                    c.time_scale = std::isfinite(scale) ? scale : 0.0;
                    c.contribution = std::abs(w) * mass(e, p) * tau;
                    cand.push_back(c);
                };

                const std::size_t n = pts.size();
                std::vector<char> in(n);
                bool all = true;
                for (std::size_t i = 0; i < n; ++i) {
                    in[i] = pts[i].u < e;
                    all = all && in[i];
                }
                auto gap = [&](std::size_t i, std::size_t j) {
                    const double d = pts[j].x - pts[i].x;
                    return d > 0 ? d : d + P;
                };
                if (all) {
                    double tau = 0.0;
                    for (std::size_t i = 0; i < n; ++i)
                        tau += 0.5 * gap(i, (i + 1) % n) * (inverse_speed(pts[i], e) + inverse_speed(pts[(i + 1) % n], e));
                    scale = time_scale(0, n - 1);
                    push(start_at(x_min, +1.0), false, tau);
                    push(start_at(x_min, -1.0), false, tau);
                    continue;
                }
                // Runs of inside points on the circle; start scanning after an outside point.
                std::size_t first = 0;
                while (in[first]) ++first;
                for (std::size_t k = 1; k <= n; ++k) {
                    const std::size_t i = (first + k) % n;
                    if (!in[i] || in[(i + n - 1) % n]) continue;
                    std::size_t best = i, last = i;
                    double half = 0.0;
                    for (std::size_t j = i; in[j]; j = (j + 1) % n) {
                        if (pts[j].u < pts[best].u) best = j;
                        const std::size_t nx = (j + 1) % n;
                        if (in[nx]) half += 0.5 * gap(j, nx) * (inverse_speed(pts[j], e) + inverse_speed(pts[nx], e));
                        last = j;
                    }
                    // Turning-point ends: int_0^d dx / sqrt(c x) = 2 d / |v1^(d)|.
                    const std::size_t before = (i + n - 1) % n, after = (last + 1) % n;
                    const double d0 = gap(before, i) * (e - pts[i].u) / (pts[before].u - pts[i].u);
                    const double d1 = gap(last, after) * (e - pts[last].u) / (pts[after].u - pts[last].u);
                    half += 2.0 * d0 * inverse_speed(pts[i], e) + 2.0 * d1 * inverse_speed(pts[last], e);
                    scale = time_scale(i, last);
                    push(start_at(pts[best].x, +1.0), true, 2.0 * half);
                }
            }
        }
    }

    // Drop the least important orbits while their estimated share stays below prune_tol.
    std::vector<std::size_t> order(cand.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return cand[a].contribution < cand[b].contribution; });
    double total = 0.0;
    for (const auto& c : cand) total += c.contribution;
    std::vector<char> keep(cand.size(), 1);
    double dropped_share = 0.0;
    for (std::size_t i : order) {
        if (dropped_share + cand[i].contribution > s.prune_tol * total) break;
        dropped_share += cand[i].contribution;
        keep[i] = 0;
    }
    pruned_share_ = total > 0 ? dropped_share / total : 0.0;
    std::vector<Candidate> kept;
    for (std::size_t i = 0; i < cand.size(); ++i)
        if (keep[i]) kept.push_back(cand[i]);

    AveragingConfig hcfg = cfg;
    hcfg.coef_tol = s.harmonic_tol;
    std::vector<OrbitHarmonics> harm(kept.size());
    std::vector<char> ok(kept.size(), 0);
    parallel_for(static_cast<Index>(kept.size()), cfg.threads, [&](Index i) {
        const Candidate& c = kept[static_cast<std::size_t>(i)];
        // Period-scaled steps first; the plain step control if the return is missed.
        for (double hint : {c.time_scale, 0.0}) {
            try {
                harm[static_cast<std::size_t>(i)] = orbit_harmonics(c.node.start, fields, sign, batch, count, hcfg, hint);
                ok[static_cast<std::size_t>(i)] = 1;
                return;
            } catch (const NoReturn&) {
            }
        }
    });
    for (std::size_t i = 0; i < kept.size(); ++i) {
        if (!ok[i]) {
            ++skipped_;
            skipped_weight_ += std::abs(kept[i].node.weight) * mass(kept[i].node.e, kept[i].node.p);
            continue;
        }
        OrbitNode node = kept[i].node;
        node.tau = harm[i].info.tau;
        node.winding = harm[i].info.winding;
        node.tau_estimate = kept[i].tau_estimate;
        node.samples = harm[i].samples;
        node.harmonics = static_cast<int>(harm[i].harmonic.size());
        orbits_.push_back(node);
        harmonic_.push_back(std::move(harm[i].harmonic));
        samples_.push_back(harm[i].samples);
        coef_.push_back(std::move(harm[i].G));
        dropped_ = std::max(dropped_, harm[i].dropped);
    }
}

Matrix OrbitQuadrature::gram(const Vector& w, double T) const {
    if (w.size() != static_cast<Index>(orbits_.size())) throw InvalidArgument("one weight per orbit");
    Matrix out = Matrix::Zero(count_, count_);
    const bool inf = T == kInf;
    Eigen::VectorXcd kappa;
    for (std::size_t q = 0; q < orbits_.size(); ++q) {
        if (w(static_cast<Index>(q)) == 0.0) continue;
        const double scale = w(static_cast<Index>(q)) * orbits_[q].tau;
        const Eigen::MatrixXcd& G = coef_[q];
        if (inf) {
            // harmonic[0] is always m = 0.
            const Vector g0 = G.col(0).real();
            out.noalias() += scale * g0 * g0.transpose();
            continue;
        }
        const auto& h = harmonic_[q];
        kappa.resize(static_cast<Index>(h.size()));
        const int n = samples_[q];
        for (std::size_t i = 0; i < h.size(); ++i) {
            const int m = h[i];
            const double om = 2.0 * kPi * m / orbits_[q].tau;
            const double fold = (m == 0 || (n % 2 == 0 && m == n / 2)) ? 1.0 : 2.0;
            kappa(static_cast<Index>(i)) = fold / Complex(1.0, -om * T);
        }
        out.noalias() += scale * (G.conjugate() * kappa.asDiagonal() * G.transpose()).real();
    }
    return out;
}

Index OrbitQuadrature::stored_harmonics() const {
    Index n = 0;
    for (const auto& h : harmonic_) n += static_cast<Index>(h.size());
    return n;
}

double OrbitQuadrature::integrate(const Vector& w) const {
    double s = 0.0;
    for (std::size_t q = 0; q < orbits_.size(); ++q) s += w(static_cast<Index>(q)) * orbits_[q].tau;
    return s;
}

}  // namespace vmstab
