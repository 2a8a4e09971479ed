#include "vmstab/trajectories.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <string>

namespace vmstab {

namespace {

// Butcher's seven-stage sixth-order method.
constexpr std::array<std::array<double, 6>, 7> kA6{{
    {0, 0, 0, 0, 0, 0},
    {1.0 / 3, 0, 0, 0, 0, 0},
    {0, 2.0 / 3, 0, 0, 0, 0},
    {1.0 / 12, 1.0 / 3, -1.0 / 12, 0, 0, 0},
    {-1.0 / 16, 9.0 / 8, -3.0 / 16, -3.0 / 8, 0, 0},
    {0, 9.0 / 8, -3.0 / 8, -3.0 / 4, 1.0 / 2, 0},
    {9.0 / 44, -9.0 / 11, 63.0 / 44, 18.0 / 11, 0, -16.0 / 11},
}};
constexpr std::array<double, 7> kB6{11.0 / 120, 0, 27.0 / 40, 27.0 / 40, -4.0 / 15, -4.0 / 15, 11.0 / 120};

PhasePoint axpy(const PhasePoint& z, double h, const PhasePoint& k) {
    return {z.x + h * k.x, z.v1 + h * k.v1, z.v2 + h * k.v2};
}

double wrap(double dx, double period) {
    return dx - period * std::round(dx / period);
}

}  // namespace

PhasePoint rk_step(const Characteristics& ch, const PhasePoint& z, double h, int order) {
    if (order == 4) {
        const PhasePoint k1 = ch.velocity(z);
        const PhasePoint k2 = ch.velocity(axpy(z, 0.5 * h, k1));
        const PhasePoint k3 = ch.velocity(axpy(z, 0.5 * h, k2));
        const PhasePoint k4 = ch.velocity(axpy(z, h, k3));
        return {z.x + h / 6 * (k1.x + 2 * k2.x + 2 * k3.x + k4.x),
                z.v1 + h / 6 * (k1.v1 + 2 * k2.v1 + 2 * k3.v1 + k4.v1),
                z.v2 + h / 6 * (k1.v2 + 2 * k2.v2 + 2 * k3.v2 + k4.v2)};
    }
    if (order != 6) throw InvalidArgument("integrator order must be 4 or 6");
    std::array<PhasePoint, 7> k;
    for (int i = 0; i < 7; ++i) {
        PhasePoint y = z;
        for (int j = 0; j < i; ++j) {
            const double a = kA6[i][j];
            if (a == 0.0) continue;
            y.x += h * a * k[j].x;
            y.v1 += h * a * k[j].v1;
            y.v2 += h * a * k[j].v2;
        }
        k[i] = ch.velocity(y);
    }
    PhasePoint out = z;
    for (int i = 0; i < 7; ++i) {
        out.x += h * kB6[i] * k[i].x;
        out.v1 += h * kB6[i] * k[i].v1;
        out.v2 += h * kB6[i] * k[i].v2;
    }
    return out;
}

PhasePoint flow(const PhasePoint& p0, double s, const FieldProfile& fields, int sign,
                const IntegratorConfig& cfg) {
    if (!(cfg.dt > 0)) throw InvalidArgument("integrator dt must be positive");
    if (s == 0.0) return p0;
    const Characteristics ch(fields, sign);
    const auto steps = static_cast<long>(std::ceil(std::abs(s) / cfg.dt));
    const double h = s / steps;
    PhasePoint z = p0;
    for (long i = 0; i < steps; ++i) z = rk_step(ch, z, h, cfg.order);
    const auto [e0, q0] = ch.invariants(p0);
    const auto [e1, q1] = ch.invariants(z);
    const double drift = std::abs(e1 - e0) + std::abs(q1 - q0);
    const double floor = 1e-12 * (1.0 + std::abs(e0) + std::abs(q0));
    if (drift > cfg.drift_tol * std::abs(s) + floor)
        throw DriftExceeded("invariant drift " + std::to_string(drift) + " over time " +
                            std::to_string(s) + " (dt too large)");
    return z;
}

double scaled_distance(const PhasePoint& a, const PhasePoint& b, double period, double vref) {
    const double dx = wrap(a.x - b.x, period) / period;
    const double s = 1.0 + vref;
    const double d1 = (a.v1 - b.v1) / s, d2 = (a.v2 - b.v2) / s;
    return std::sqrt(dx * dx + d1 * d1 + d2 * d2);
}

OrbitInfo orbit_info(const PhasePoint& p0, const FieldProfile& fields, int sign,
                     const IntegratorConfig& cfg) {
    const Characteristics ch(fields, sign);
    const double P = fields.period();
    const double vs = 1.0 + std::hypot(p0.v1, p0.v2);
    // Backward direction of travel in scaled coordinates; it is the section normal.
    const PhasePoint f0 = ch.velocity(p0);
    double n[3] = {-f0.x / P, -f0.v1 / vs, -f0.v2 / vs};
    const double nn = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
    if (nn < 1e-13) throw NoReturn("stationary point: the characteristic velocity vanishes");
    for (double& c : n) c /= nn;

    auto section = [&](const PhasePoint& z) {
        return n[0] * wrap(z.x - p0.x, P) / P + n[1] * (z.v1 - p0.v1) / vs + n[2] * (z.v2 - p0.v2) / vs;
    };

    const double dt = cfg.dt;
    PhasePoint z = p0;
    double prev = 0.0;
    const auto max_steps = static_cast<long>(std::ceil(cfg.max_orbit_time / dt));
    for (long j = 1; j <= max_steps; ++j) {
        const PhasePoint next = rk_step(ch, z, -dt, cfg.order);
        const double sig = section(next);
        if (j > 1 && prev < 0.0 && sig >= 0.0 && scaled_distance(next, p0, P, vs - 1.0) < 0.25) {
            double lo = 0.0, hi = dt;
            for (int it = 0; it < 80 && hi - lo > 1e-16 * dt; ++it) {
                const double mid = 0.5 * (lo + hi);
                (section(rk_step(ch, z, -mid, cfg.order)) < 0.0 ? lo : hi) = mid;
            }
            const double h = 0.5 * (lo + hi);
            const PhasePoint hit = rk_step(ch, z, -h, cfg.order);
            const double closure = scaled_distance(hit, p0, P, vs - 1.0);
            if (closure <= cfg.return_tol) {
                OrbitInfo info;
                info.tau = (j - 1) * dt + h;
                info.winding = static_cast<int>(std::lround((p0.x - hit.x) / P));
                info.kind = info.winding == 0 ? OrbitKind::Trapped : OrbitKind::Passing;
                info.closure = closure;
                return info;
            }
        }
        prev = sig;
        z = next;
    }
    throw NoReturn("no return within horizon " + std::to_string(cfg.max_orbit_time));
}

InvariantDrift invariant_drift(const PhasePoint& p0, double s_max, const FieldProfile& fields,
                               int sign, const IntegratorConfig& cfg) {
    if (!(s_max > 0)) throw InvalidArgument("invariant_drift needs s_max > 0");
    const Characteristics ch(fields, sign);
    const auto steps = static_cast<long>(std::ceil(s_max / cfg.dt));
    const double h = -s_max / steps;
    const auto [e0, q0] = ch.invariants(p0);
    InvariantDrift d;
    PhasePoint z = p0;
    for (long i = 0; i < steps; ++i) {
        z = rk_step(ch, z, h, cfg.order);
        const auto [e, q] = ch.invariants(z);
        d.de = std::max(d.de, std::abs(e - e0));
        d.dp = std::max(d.dp, std::abs(q - q0));
    }
    return d;
}

void dump_trajectory_csv(std::ostream& os, const PhasePoint& p0, double s_max,
                         const FieldProfile& fields, int sign, const IntegratorConfig& cfg,
                         int max_points) {
    const Characteristics ch(fields, sign);
    const auto steps = static_cast<long>(std::ceil(s_max / cfg.dt));
    const double h = -s_max / steps;
    const long stride = std::max<long>(1, (steps + max_points - 1) / std::max(1, max_points - 1));
    os << "s,x,v1,v2,e,p\n";
    char buf[256];
    PhasePoint z = p0;
    for (long i = 0; i <= steps; ++i) {
        if (i % stride == 0 || i == steps) {
            const auto [e, q] = ch.invariants(z);
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", i * h, z.x, z.v1,
                          z.v2, e, q);
            os << buf;
        }
        if (i < steps) z = rk_step(ch, z, h, cfg.order);
    }
}

}  // namespace vmstab
