#include "vmstab/equilibrium.hpp"

#include <algorithm>
#include <cmath>

namespace vmstab {

double maxwellian_normalization(double theta) {
    return 2.0 * kPi * theta * (1.0 + theta) * std::exp(-1.0 / theta);
}

std::vector<std::string> species_catalog() {
    return {"zero", "relativistic-maxwellian", "shifted-maxwellian", "anisotropic"};
}

SpeciesProfile make_species(const std::string& name, const SpeciesParams& prm, int sign) {
    if (sign != 1 && sign != -1) throw InvalidArgument("species sign must be +1 or -1");
    if (!(prm.alpha > 2.0)) throw InvalidArgument("weight exponent alpha must exceed 2");
    if (!(prm.theta > 0.0)) throw InvalidArgument("theta must be positive");
    SpeciesProfile s;
    s.name = name;
    s.sign = sign;
    s.alpha = prm.alpha;
    const double th = prm.theta;
    const double amp = prm.density / maxwellian_normalization(th);
    if (name == "zero") {
        // defaults already vanish
    } else if (name == "relativistic-maxwellian") {
        s.mu = [=](double e, double) { return amp * std::exp(-e / th); };
        s.mu_e = [=](double e, double) { return -amp / th * std::exp(-e / th); };
        s.mu_p = [](double, double) { return 0.0; };
    } else if (name == "shifted-maxwellian") {
        const double u = prm.drift;
        if (!(std::abs(u) < 1.0)) throw InvalidArgument("shifted-maxwellian drift must satisfy |u| < 1");
        s.mu = [=](double e, double p) { return amp * std::exp(-(e - u * p) / th); };
        s.mu_e = [=](double e, double p) { return -amp / th * std::exp(-(e - u * p) / th); };
        s.mu_p = [=](double e, double p) { return amp * u / th * std::exp(-(e - u * p) / th); };
    } else if (name == "anisotropic") {
        const double a = prm.anisotropy;
        s.mu = [=](double e, double p) { return amp * (1.0 + a * p * p) * std::exp(-e / th); };
        s.mu_e = [=](double e, double p) {
            return -amp / th * (1.0 + a * p * p) * std::exp(-e / th);
        };
        s.mu_p = [=](double e, double p) { return amp * 2.0 * a * p * std::exp(-e / th); };
    } else {
        throw InvalidArgument("unknown species profile '" + name + "'");
    }
    if (prm.c > 0.0) {
        s.c = prm.c;
    } else {
        s.c = 1.0;
        const auto rep = validate_integrability(s, 240, {1.0, 60.0, 0.0});
        if (rep.max_ratio > 0.0) s.c = 2.0 * rep.max_ratio;
    }
    return s;
}

FieldProfile::FieldProfile(double period, Vector phi0, Vector psi0)
    : period_(period), phi0_(std::move(phi0)), psi0_(std::move(psi0)) {
    if (!(period > 0)) throw InvalidArgument("period must be positive");
    const Index n = phi0_.size();
    if (n < 1 || psi0_.size() != n) throw InvalidArgument("potential arrays must be non-empty and equal length");
    x_ = Vector::LinSpaced(n, 0.0, period * (n - 1) / n);
    phi_ = TrigInterpolant({phi0_.data(), static_cast<std::size_t>(n)}, period);
    psi_ = TrigInterpolant({psi0_.data(), static_cast<std::size_t>(n)}, period);
    e1_ = -phi_.derivative_samples();
    b0_ = psi_.derivative_samples();
    e1i_ = TrigInterpolant({e1_.data(), static_cast<std::size_t>(n)}, period);
    bi_ = TrigInterpolant({b0_.data(), static_cast<std::size_t>(n)}, period);
    zero_ = phi_.is_zero() && psi_.is_zero();
}

FieldProfile FieldProfile::zero(double period, int nx) {
    return FieldProfile(period, Vector::Zero(nx), Vector::Zero(nx));
}

FieldProfile FieldProfile::cosine(double period, int nx, double phi_amp, double psi_amp) {
    Vector phi(nx), psi(nx);
    for (int j = 0; j < nx; ++j) {
        const double c = std::cos(2.0 * kPi * j / nx);
        phi(j) = phi_amp * c;
        psi(j) = psi_amp * c;
    }
    return FieldProfile(period, phi, psi);
}

std::pair<double, double> invariants_of(double x, double v1, double v2, const FieldProfile& fields,
                                        int sign) {
    const auto [phi, psi] = fields.potentials(x);
    return {lorentz(v1, v2) + sign * phi, v2 + sign * psi};
}

namespace {

// max over angles and sampled x-nodes of |mu| at momentum radius r.
double radial_envelope(const SpeciesProfile& s, const FieldProfile& fields, double r) {
    constexpr int kAngles = 32;
    const int nx = fields.size();
    const int stride = std::max(1, nx / 8);
    double m = 0.0;
    for (int j = 0; j < nx; j += stride) {
        const double x = fields.x()(j);
        for (int a = 0; a < kAngles; ++a) {
            const double th = 2.0 * kPi * a / kAngles;
            const auto [e, p] = invariants_of(x, r * std::cos(th), r * std::sin(th), fields, s.sign);
            m = std::max(m, std::abs(s.mu(e, p)));
        }
    }
    return m;
}

}  // namespace

double velocity_tail_estimate(const SpeciesProfile& plus, const SpeciesProfile& minus,
                              const FieldProfile& fields, double vmax) {
    double tail = 0.0, total = 0.0;
    for (const SpeciesProfile* s : {&plus, &minus}) {
        if (s->is_zero()) continue;
        auto radial = [&](double r) { return 2.0 * kPi * r * radial_envelope(*s, fields, r); };
        total += integrate_half_line(radial, 1e-12);
        tail += integrate_half_line([&](double t) { return radial(vmax + t); }, 1e-10);
    }
    return total > 0.0 ? tail / total : 0.0;
}

VelocityQuadrature make_velocity_quadrature(const SpeciesProfile& plus, const SpeciesProfile& minus,
                                            const FieldProfile& fields, const VelocitySettings& s) {
    VelocityQuadrature q;
    if (s.vmax > 0.0) {
        q.vmax = s.vmax;
        q.tail_estimate = velocity_tail_estimate(plus, minus, fields, q.vmax);
        if (q.tail_estimate > s.tail_tol)
            throw QuadratureTailError("momentum cutoff " + std::to_string(q.vmax) +
                                      " leaves relative tail " + std::to_string(q.tail_estimate) +
                                      " above tolerance " + std::to_string(s.tail_tol));
    } else if (plus.is_zero() && minus.is_zero()) {
        q.vmax = 1.0;
    } else {
        double v = 2.0;
        for (;;) {
            q.tail_estimate = velocity_tail_estimate(plus, minus, fields, v);
            if (q.tail_estimate <= s.tail_tol) break;
            v *= 1.1;
            if (v > 1e4)
                throw QuadratureTailError("no momentum cutoff below 1e4 meets tail tolerance");
        }
        // Round up to a half-integer so configurations echo cleanly.
        q.vmax = std::ceil(2.0 * v) / 2.0;
        q.tail_estimate = velocity_tail_estimate(plus, minus, fields, q.vmax);
    }
    q.rule = graded_gauss_legendre(q.vmax, s.points_per_panel, s.first_panel, s.panel_ratio);
    return q;
}

namespace {

Moments moments_at(const SpeciesProfile& plus, const SpeciesProfile& minus,
                   const QuadratureRule& rule, double phi, double psi) {
    Moments m;
    const Index nv = rule.nodes.size();
    for (Index i = 0; i < nv; ++i) {
        const double v1 = rule.nodes(i);
        for (Index k = 0; k < nv; ++k) {
            const double v2 = rule.nodes(k);
            const double w = rule.weights(i) * rule.weights(k);
            const double g = lorentz(v1, v2);
            double f = 0.0;
            if (!plus.is_zero()) f += plus.mu(g + phi, v2 + psi);
            if (!minus.is_zero()) f -= minus.mu(g - phi, v2 - psi);
            m.rho0 += w * f;
            m.j2 += w * (v2 / g) * f;
        }
    }
    return m;
}

double absolute_density(const SpeciesProfile& plus, const SpeciesProfile& minus,
                        const QuadratureRule& rule) {
    double s = 0.0;
    const Index nv = rule.nodes.size();
    for (Index i = 0; i < nv; ++i)
        for (Index k = 0; k < nv; ++k) {
            const double g = lorentz(rule.nodes(i), rule.nodes(k));
            const double w = rule.weights(i) * rule.weights(k);
            s += w * (std::abs(plus.mu(g, rule.nodes(k))) + std::abs(minus.mu(g, rule.nodes(k))));
        }
    return s;
}

struct NodalMoments {
    Vector rho, j2;
};

NodalMoments nodal_moments(const SpeciesProfile& plus, const SpeciesProfile& minus,
                           const QuadratureRule& rule, const Vector& phi, const Vector& psi) {
    NodalMoments out{Vector(phi.size()), Vector(phi.size())};
    for (Index j = 0; j < phi.size(); ++j) {
        const auto m = moments_at(plus, minus, rule, phi(j), psi(j));
        out.rho(j) = m.rho0;
        out.j2(j) = m.j2;
    }
    return out;
}

double residual_of(const FieldProfile& f, const NodalMoments& m) {
    const auto n = static_cast<std::size_t>(f.size());
    const Vector phi_xx = -TrigInterpolant({f.e1().data(), n}, f.period()).derivative_samples();
    const Vector psi_xx = TrigInterpolant({f.b0().data(), n}, f.period()).derivative_samples();
    return std::max((phi_xx + m.rho).cwiseAbs().maxCoeff(), (psi_xx + m.j2).cwiseAbs().maxCoeff());
}

}  // namespace

Moments moments(const EquilibriumSpec& eq, double x) {
    if (eq.velocity.rule.nodes.size() == 0)
        throw InvalidArgument("moments: momentum quadrature not configured");
    const auto [phi, psi] = eq.fields.potentials(x);
    return moments_at(eq.plus, eq.minus, eq.velocity.rule, phi, psi);
}

double consistency_residual(const EquilibriumSpec& eq) {
    const auto m = nodal_moments(eq.plus, eq.minus, eq.velocity.rule, eq.fields.phi0(), eq.fields.psi0());
    return residual_of(eq.fields, m);
}

PotentialSolution solve_potentials(const SpeciesProfile& plus, const SpeciesProfile& minus,
                                   double period, int nx, const VelocitySettings& velocity,
                                   const PotentialSolveOptions& opt) {
    if (nx < 2) throw InvalidArgument("solve_potentials needs nx >= 2");
    const auto zero = FieldProfile::zero(period, nx);
    const auto vq = make_velocity_quadrature(plus, minus, zero, velocity);

    // Neutrality of the species themselves: with no fields the moments are x-independent.
    const auto bare = moments_at(plus, minus, vq.rule, 0.0, 0.0);
    const double scale = std::max(absolute_density(plus, minus, vq.rule), 1e-300);
    if (std::abs(bare.rho0) > std::max(opt.tol, 1e-9 * scale))
        throw NeutralityViolation("period-averaged charge density " + std::to_string(bare.rho0) +
                                  " cannot vanish on a periodic domain");
    if (std::abs(bare.j2) > std::max(opt.tol, 1e-9 * scale))
        throw NeutralityViolation("period-averaged current " + std::to_string(bare.j2) +
                                  " cannot vanish on a periodic domain");

    Vector phi = Vector::Zero(nx), psi = Vector::Zero(nx);
    if (opt.initial_guess) {
        phi = opt.initial_guess->first;
        psi = opt.initial_guess->second;
        if (phi.size() != nx || psi.size() != nx) throw InvalidArgument("initial guess has wrong size");
        phi.array() -= phi.mean();
        psi.array() -= psi.mean();
    }
    const auto n = static_cast<std::size_t>(nx);
    double first = -1.0;
    for (int it = 0; it <= opt.max_iterations; ++it) {
        FieldProfile f(period, phi, psi);
        const auto m = nodal_moments(plus, minus, vq.rule, phi, psi);
        const double r = residual_of(f, m);
        if (first < 0) first = r;
        if (r <= opt.tol) return {std::move(f), r, it};
        if (it == opt.max_iterations || !std::isfinite(r) || r > 1e6 * std::max(first, opt.tol))
            throw NonConvergence("Picard iteration stalled after " + std::to_string(it) +
                                 " iterations, residual " + std::to_string(r));
        const Vector neg_rho = -m.rho, neg_j = -m.j2;
        const Vector phi_new = TrigInterpolant({neg_rho.data(), n}, period).inverse_laplacian_samples();
        const Vector psi_new = TrigInterpolant({neg_j.data(), n}, period).inverse_laplacian_samples();
        phi = (1.0 - opt.damping) * phi + opt.damping * phi_new;
        psi = (1.0 - opt.damping) * psi + opt.damping * psi_new;
        phi.array() -= phi.mean();
        psi.array() -= psi.mean();
    }
    throw NonConvergence("unreachable");
}

EquilibriumSpec make_equilibrium(SpeciesProfile plus, SpeciesProfile minus, FieldProfile fields,
                                 const VelocitySettings& velocity, double validation_tol) {
    if (plus.sign != 1 || minus.sign != -1) throw InvalidArgument("species signs must be (+1, -1)");
    EquilibriumSpec eq;
    eq.velocity = make_velocity_quadrature(plus, minus, fields, velocity);
    eq.plus = std::move(plus);
    eq.minus = std::move(minus);
    eq.fields = std::move(fields);
    eq.consistency_residual = consistency_residual(eq);
    eq.validated = eq.consistency_residual <= validation_tol;
    return eq;
}

IntegrabilityReport validate_integrability(const SpeciesProfile& s, int sample_count,
                                           const IntegrabilityDomain& d) {
    if (sample_count < 1) throw InvalidArgument("validate_integrability needs sample_count >= 1");
    IntegrabilityReport rep;
    constexpr int kFan = 9;
    for (int i = 0; i < sample_count; ++i) {
        const double e = sample_count == 1 ? d.e_min
                                           : d.e_min + (d.e_max - d.e_min) * i / (sample_count - 1);
        const double pmax = std::sqrt(std::max(e * e - 1.0, 0.0)) + d.p_margin;
        for (int k = 0; k < kFan; ++k) {
            const double p = pmax * (2.0 * k / (kFan - 1) - 1.0);
            const double ratio = (std::abs(s.mu_e(e, p)) + std::abs(s.mu_p(e, p))) / s.weight(e);
            rep.max_ratio = std::max(rep.max_ratio, ratio);
        }
    }
    rep.pass = rep.max_ratio < 1.0;
    return rep;
}

}  // namespace vmstab
