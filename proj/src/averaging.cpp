#include "vmstab/averaging.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <random>

namespace vmstab {

namespace {

// Time scale of the field-driven motion: sqrt(|E1'| + |B0'|) + |B0|.
double field_rate(const FieldProfile& f) {
    if (f.is_zero()) return 0.0;
    const auto n = static_cast<std::size_t>(f.size());
    const Vector de = TrigInterpolant({f.e1().data(), n}, f.period()).derivative_samples();
    const Vector db = TrigInterpolant({f.b0().data(), n}, f.period()).derivative_samples();
    return std::sqrt(de.cwiseAbs().maxCoeff() + db.cwiseAbs().maxCoeff()) + f.b0().cwiseAbs().maxCoeff();
}

// Orbits in weak fields or at high gamma evolve slowly; they get a longer step.
IntegratorConfig node_config(const PhasePoint& z, const FieldProfile& f, double rate,
                             const IntegratorConfig& base) {
    constexpr double kMaxFactor = 64.0;
    const double gamma = lorentz(z.v1, z.v2);
    const double gmin = std::max(1.0, gamma - 2.0 * f.max_abs_phi());
    const double factor = rate > 0 ? std::clamp(std::sqrt(gmin) / rate, 1.0, kMaxFactor) : kMaxFactor;
    IntegratorConfig cfg = base;
    cfg.dt = base.dt * factor;
    cfg.max_orbit_time = base.max_orbit_time * factor;
    return cfg;
}

bool is_stationary(const PhasePoint& z, const FieldProfile& f, int sign) {
    const PhasePoint v = Characteristics(f, sign).velocity(z);
    const double vs = 1.0 + std::hypot(z.v1, z.v2);
    return std::hypot(v.x / f.period(), std::hypot(v.v1, v.v2) / vs) < 1e-13;
}

double real_average(const OrbitSpectrum& s, int j, double T) { return average_along(s, j, T, 0.0); }

}  // namespace

double average_along(const OrbitSpectrum& s, int j, double T, double t) {
    if (s.kind == OrbitSpectrum::Kind::Stationary) return s.value[j];
    if (s.kind == OrbitSpectrum::Kind::Direct) throw InvalidArgument("no orbit spectrum for a direct node");
    double sum = 0.0;
    for (int e = s.offsets[j]; e < s.offsets[j + 1]; ++e) {
        const int m = s.harmonic[e];
        Complex c = s.coef[e];
        if (m == 0) {
            sum += c.real();
        } else if (T != kInf) {
            const double w = 2.0 * kPi * m / s.tau;
            if (t != 0.0) c *= std::polar(1.0, w * t);
            const double wt = w * T;
            sum += (c.real() + c.imag() * wt) / (1.0 + wt * wt);
        }
    }
    return sum;
}

PhaseGrid make_phase_grid(const EquilibriumSpec& eq, int nx) {
    if (nx < 1) throw InvalidArgument("phase grid needs nx >= 1");
    PhaseGrid g;
    g.period = eq.fields.period();
    g.x = Vector::LinSpaced(nx, 0.0, g.period * (nx - 1) / nx);
    g.v = eq.velocity.rule;
    const Index n = g.size();
    g.weight_plus.resize(n);
    g.weight_minus.resize(n);
    for (Index i = 0; i < n; ++i) {
        const PhasePoint z = g.node(i);
        g.weight_plus(i) = eq.plus.weight(invariants_of(z.x, z.v1, z.v2, eq.fields, +1).first);
        g.weight_minus(i) = eq.minus.weight(invariants_of(z.x, z.v1, z.v2, eq.fields, -1).first);
    }
    return g;
}

int fft_friendly_size(int target) {
    for (int n = std::max(1, target);; ++n) {
        int m = n;
        for (int p : {2, 3, 5})
            while (m % p == 0) m /= p;
        if (m == 1) return n;
    }
}

OrbitHarmonics orbit_harmonics(const PhasePoint& z, const FieldProfile& fields, int sign,
                               const SymbolBatch& batch, int count, const AveragingConfig& cfg,
                               double time_scale) {
    if (is_stationary(z, fields, sign)) throw NoReturn("stationary point");
    IntegratorConfig icfg = node_config(z, fields, field_rate(fields), cfg.integrator);
    if (time_scale > 0) {
        // Slow orbits: a fixed number of steps per dynamical time, within the usual cap.
        // Free streaming is integrated exactly at any step, so zero fields have no cap.
        constexpr double kStepsPerTime = 50.0, kMaxFactor = 64.0;
        icfg.dt = std::max(icfg.dt, time_scale / kStepsPerTime);
        if (!fields.is_zero()) icfg.dt = std::min(icfg.dt, kMaxFactor * cfg.integrator.dt);
        icfg.max_orbit_time = std::max(icfg.max_orbit_time, 400.0 * time_scale);
    }
    OrbitHarmonics out;
    out.info = orbit_info(z, fields, sign, icfg);
    const double tau = out.info.tau;

    const Characteristics ch(fields, sign);
    thread_local Eigen::FFT<double> fft;
    int n = fft_friendly_size(std::max(cfg.min_samples, static_cast<int>(std::ceil(tau / icfg.dt))));
    std::vector<double> samples;
    std::vector<Complex> packed, spec;
    Eigen::MatrixXcd full;
    for (;;) {
        // Samples g_j(Z(-k tau / n)), k = 0..n-1, stored per symbol.
        samples.assign(static_cast<std::size_t>(count) * n, 0.0);
        std::vector<double> row(count);
        PhasePoint y = z;
        const double h = -tau / n;
        for (int k = 0; k < n; ++k) {
            batch(y, row);
            for (int j = 0; j < count; ++j) samples[static_cast<std::size_t>(j) * n + k] = row[j];
            y = rk_step(ch, y, h, icfg.order);
        }
        // The sampled orbit closes only up to the integration error; the resulting
        // jump sets the floor of the spectrum.
        batch(y, row);
        double jump = 0.0;
        for (int j = 0; j < count; ++j)
            jump = std::max(jump, std::abs(row[j] - samples[static_cast<std::size_t>(j) * n]));
        double scale = 0.0;
        for (double s : samples) scale = std::max(scale, std::abs(s));
        scale = std::max(scale, 1e-300);

        const int half = n / 2;
        full.resize(count, half + 1);
        packed.resize(n);
        for (int j = 0; j < count; j += 2) {
            const bool pair = j + 1 < count;
            const double* a = &samples[static_cast<std::size_t>(j) * n];
            const double* b = pair ? &samples[static_cast<std::size_t>(j + 1) * n] : nullptr;
            for (int k = 0; k < n; ++k) packed[k] = Complex(a[k], pair ? b[k] : 0.0);
            fft.fwd(spec, packed);
            for (int m = 0; m <= half; ++m) {
                const Complex zm = spec[m], zc = std::conj(spec[(n - m) % n]);
                full(j, m) = 0.5 * (zm + zc) / static_cast<double>(n);
                if (pair) full(j + 1, m) = (zm - zc) / Complex(0.0, 2.0 * n);
            }
        }
        double high = 0.0;
        for (int m = n / 4 + 1; m <= half; ++m) high = std::max(high, full.col(m).cwiseAbs().maxCoeff());
        // Refine until the upper half of the band is negligible.
        if (high <= std::max(1e-12 * scale, jump) || n >= (1 << 18)) {
            out.samples = n;
            out.dropped = 0.0;
            std::vector<int> keep;
            for (int m = 0; m <= half; ++m) {
                const double mag = full.col(m).cwiseAbs().maxCoeff();
                if (m == 0 || mag > cfg.coef_tol * scale)
                    keep.push_back(m);
                else
                    out.dropped = std::max(out.dropped, mag / scale);
            }
            out.harmonic = keep;
            out.G.resize(count, static_cast<Index>(keep.size()));
            for (std::size_t i = 0; i < keep.size(); ++i) out.G.col(static_cast<Index>(i)) = full.col(keep[i]);
            return out;
        }
        n = fft_friendly_size(2 * n);
    }
}

OrbitSpectrum orbit_spectrum(const PhasePoint& z, const FieldProfile& fields, int sign,
                             const SymbolBatch& batch, int count, const AveragingConfig& cfg) {
    OrbitSpectrum out;
    out.value.assign(count, 0.0);
    batch(z, out.value);
    if (is_stationary(z, fields, sign)) {
        out.kind = OrbitSpectrum::Kind::Stationary;
        return out;
    }
    OrbitHarmonics h;
    try {
        h = orbit_harmonics(z, fields, sign, batch, count, cfg);
    } catch (const NoReturn&) {
        out.kind = OrbitSpectrum::Kind::Direct;
        return out;
    }
    out.tau = h.info.tau;
    out.winding = h.info.winding;
    out.dropped = h.dropped;
    const int n = h.samples;
    out.offsets.assign(1, 0);
    for (int j = 0; j < count; ++j) {
        const double scale = std::max(std::abs(out.value[j]), h.G.row(j).cwiseAbs().maxCoeff());
        for (std::size_t i = 0; i < h.harmonic.size(); ++i) {
            const int m = h.harmonic[i];
            // Stored in the e^{+i w u} convention with the +-m pair folded in.
            const bool nyquist = n % 2 == 0 && m == n / 2;
            const Complex c = (m == 0 || nyquist ? 1.0 : 2.0) * std::conj(h.G(j, static_cast<Index>(i)));
            if (m == 0 || std::abs(c) > cfg.coef_tol * scale) {
                out.harmonic.push_back(m);
                out.coef.push_back(c);
            }
        }
        out.offsets.push_back(static_cast<int>(out.harmonic.size()));
    }
    return out;
}

void exponential_average_direct(const PhasePoint& z, double T, const FieldProfile& fields, int sign,
                                const SymbolBatch& batch, int count, const AveragingConfig& cfg,
                                std::span<double> out) {
    if (!(T > 0) || T == kInf) throw InvalidArgument("direct exponential average needs finite T > 0");
    const IntegratorConfig icfg = node_config(z, fields, field_rate(fields), cfg.integrator);
    const double S = T * std::log(1.0 / cfg.eps_tail);
    const double hmax = std::min(icfg.dt, T / 32.0);
    const auto steps = static_cast<long>(std::ceil(S / hmax));
    const double h = S / steps;
    const Characteristics ch(fields, sign);
    std::fill(out.begin(), out.end(), 0.0);
    std::vector<double> row(count);
    PhasePoint y = z;
    for (long i = 0; i < steps; ++i) {
        const double u0 = i * h;
        y = rk6_step_visit(ch, y, -h, [&](double c, double b, const PhasePoint& p) {
            if (b == 0.0) return;
            batch(p, row);
            const double w = b * h / T * std::exp(-(u0 + c * h) / T);
            for (int j = 0; j < count; ++j) out[j] += w * row[j];
        });
    }
    const auto [e0, q0] = ch.invariants(z);
    const auto [e1, q1] = ch.invariants(y);
    const double drift = std::abs(e1 - e0) + std::abs(q1 - q0);
    if (drift > icfg.drift_tol * S + 1e-12 * (1.0 + std::abs(e0) + std::abs(q0)))
        throw DriftExceeded("invariant drift " + std::to_string(drift) + " in exponential average");
}

OrbitCache::OrbitCache(const PhaseGrid& grid, std::vector<Index> nodes, const FieldProfile& fields,
                       int sign, SymbolBatch batch, int count, const AveragingConfig& cfg)
    : grid_(&grid), fields_(&fields), sign_(sign), batch_(std::move(batch)), count_(count), cfg_(cfg),
      nodes_(std::move(nodes)) {
    if (count_ < 1) throw InvalidArgument("OrbitCache needs at least one symbol");
    spectra_.resize(nodes_.size());
    parallel_for(nodes_.size(), cfg_.threads, [&](std::size_t i) {
        spectra_[i] = orbit_spectrum(grid_->node(nodes_[i]), *fields_, sign_, batch_, count_, cfg_);
    });
    for (const auto& s : spectra_) {
        direct_ += s.kind == OrbitSpectrum::Kind::Direct;
        stationary_ += s.kind == OrbitSpectrum::Kind::Stationary;
        dropped_ = std::max(dropped_, s.dropped);
    }
}

Matrix OrbitCache::apply(double T) const {
    if (!(T >= 0)) throw InvalidArgument("averaging horizon must be non-negative");
    Matrix out(static_cast<Index>(nodes_.size()), count_);
    if (T == 0.0) return values();
    const double t_eff = T == kInf ? cfg_.fallback_factor * grid_->period : T;
    parallel_for(nodes_.size(), cfg_.threads, [&](std::size_t i) {
        const auto& s = spectra_[i];
        if (s.kind == OrbitSpectrum::Kind::Direct) {
            std::vector<double> row(count_);
            exponential_average_direct(grid_->node(nodes_[i]), t_eff, *fields_, sign_, batch_, count_, cfg_,
                                       row);
            for (int j = 0; j < count_; ++j) out(static_cast<Index>(i), j) = row[j];
        } else {
            for (int j = 0; j < count_; ++j) out(static_cast<Index>(i), j) = real_average(s, j, T);
        }
    });
    return out;
}

Matrix OrbitCache::values() const {
    Matrix out(static_cast<Index>(nodes_.size()), count_);
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        for (int j = 0; j < count_; ++j) out(static_cast<Index>(i), j) = spectra_[i].value[j];
    return out;
}

namespace {

AveragedSamples average_symbol(const Symbol& g, double T, const PhaseGrid& grid, int sign,
                               const FieldProfile& fields, const AveragingConfig& cfg) {
    std::vector<Index> nodes(static_cast<std::size_t>(grid.size()));
    for (Index i = 0; i < grid.size(); ++i) nodes[static_cast<std::size_t>(i)] = i;
    SymbolBatch batch = [&g](const PhasePoint& z, std::span<double> out) {
        const Complex v = g(z);
        out[0] = v.real();
        out[1] = v.imag();
    };
    OrbitCache cache(grid, std::move(nodes), fields, sign, batch, 2, cfg);
    const Matrix m = cache.apply(T);
    AveragedSamples s;
    s.values = m.col(0).cast<Complex>() + Complex(0.0, 1.0) * m.col(1).cast<Complex>();
    s.T = T;
    s.tail_bound = cfg.eps_tail;
    s.quadrature_error = cache.dropped_mass();
    s.fallback_nodes = cache.direct_nodes();
    return s;
}

}  // namespace

AveragedSamples apply_QT(const Symbol& g, double T, const PhaseGrid& grid, int sign,
                         const FieldProfile& fields, const AveragingConfig& cfg) {
    if (!(T > 0) || T == kInf) throw InvalidArgument("apply_QT needs a finite T > 0");
    return average_symbol(g, T, grid, sign, fields, cfg);
}

AveragedSamples apply_Qinf(const Symbol& g, const PhaseGrid& grid, int sign, const FieldProfile& fields,
                           const AveragingConfig& cfg) {
    auto s = average_symbol(g, kInf, grid, sign, fields, cfg);
    if (s.fallback_nodes == 0) s.tail_bound = 0.0;
    return s;
}

double weighted_norm(const ComplexVector& g, const PhaseGrid& grid, int sign) {
    const Vector& w = grid.weight(sign);
    double sum = 0.0;
    for (Index i = 0; i < grid.size(); ++i) sum += grid.cell(i) * w(i) * std::norm(g(i));
    return std::sqrt(sum);
}

ComplexVector sample(const Symbol& g, const PhaseGrid& grid) {
    ComplexVector out(grid.size());
    for (Index i = 0; i < grid.size(); ++i) out(i) = g(grid.node(i));
    return out;
}

double qt_operator_norm_probe(double T, const PhaseGrid& grid, int sign, const FieldProfile& fields,
                              int trials, const AveragingConfig& cfg, std::uint64_t seed) {
    if (trials < 1) throw InvalidArgument("qt_operator_norm_probe needs trials >= 1");
    // Probe j: sum_{k<=3} (a_k cos + b_k sin)(2 pi k x / P) * (1 + c v1^ + d v2^).
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    constexpr int kModes = 4;
    std::vector<std::array<double, 2 * kModes + 2>> coef(trials);
    for (auto& c : coef)
        for (double& v : c) v = nd(rng);
    const double P = grid.period;
    SymbolBatch batch = [&](const PhasePoint& z, std::span<double> out) {
        const double g = lorentz(z.v1, z.v2);
        const double th = 2.0 * kPi * z.x / P;
        double cs[kModes], sn[kModes];
        for (int k = 0; k < kModes; ++k) {
            cs[k] = std::cos(k * th);
            sn[k] = std::sin(k * th);
        }
        for (int j = 0; j < trials; ++j) {
            const auto& c = coef[j];
            double s = 0.0;
            for (int k = 0; k < kModes; ++k) s += c[2 * k] * cs[k] + c[2 * k + 1] * sn[k];
            out[j] = s * (1.0 + 0.5 * c[2 * kModes] * z.v1 / g + 0.5 * c[2 * kModes + 1] * z.v2 / g);
        }
    };
    std::vector<Index> nodes(static_cast<std::size_t>(grid.size()));
    for (Index i = 0; i < grid.size(); ++i) nodes[static_cast<std::size_t>(i)] = i;
    OrbitCache cache(grid, std::move(nodes), fields, sign, batch, trials, cfg);
    const Matrix q = cache.apply(T);
    const Matrix g = cache.values();
    const Vector& w = grid.weight(sign);
    double worst = 0.0;
    for (int j = 0; j < trials; ++j) {
        double nq = 0.0, ng = 0.0;
        for (Index i = 0; i < grid.size(); ++i) {
            const double m = grid.cell(i) * w(i);
            nq += m * q(i, j) * q(i, j);
            ng += m * g(i, j) * g(i, j);
        }
        if (ng > 0) worst = std::max(worst, std::sqrt(nq / ng));
    }
    return worst;
}

void dump_samples_csv(std::ostream& os, const AveragedSamples& s, const PhaseGrid& grid) {
    os << "x,v1,v2,re,im\n";
    char buf[160];
    for (Index i = 0; i < s.values.size(); ++i) {
        const PhasePoint z = grid.node(i);
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", z.x, z.v1, z.v2, s.values(i).real(),
                      s.values(i).imag());
        os << buf;
    }
}

}  // namespace vmstab
