#pragma once

#include "vmstab/core.hpp"
#include "vmstab/equilibrium.hpp"

#include <functional>
#include <ostream>

namespace vmstab {

struct PhasePoint {
    double x = 0.0;
    double v1 = 0.0;
    double v2 = 0.0;
};

struct IntegratorConfig {
    int order = 6;             ///< explicit Runge-Kutta order: 4 or 6
    double dt = 0.02;          ///< base step
    double drift_tol = 1e-10;  ///< allowed |de| + |dp| per unit time
    double return_tol = 1e-8;  ///< orbit closure tolerance in the scaled metric
    double max_orbit_time = 2000.0;
};

/// Right-hand side of the characteristic ODEs of D^sign in a fixed field.
class Characteristics {
public:
    Characteristics(const FieldProfile& fields, int sign) : fields_(&fields), sign_(sign) {}

    PhasePoint velocity(const PhasePoint& z) const {
        const double g = lorentz(z.v1, z.v2);
        const double u1 = z.v1 / g, u2 = z.v2 / g;
        const auto [e1, b] = fields_->forces(z.x);
        return {u1, sign_ * (e1 + u2 * b), -sign_ * u1 * b};
    }
    std::pair<double, double> invariants(const PhasePoint& z) const {
        return invariants_of(z.x, z.v1, z.v2, *fields_, sign_);
    }
    const FieldProfile& fields() const { return *fields_; }
    int sign() const { return sign_; }

private:
    const FieldProfile* fields_;
    int sign_;
};

/// One explicit Runge-Kutta step of size h (negative h integrates backward).
PhasePoint rk_step(const Characteristics& ch, const PhasePoint& z, double h, int order);

/// Sixth-order step that also reports each stage point y_i with its abscissa
/// c_i and weight b_i, so that integrals along the step can share the stages:
/// visit(c_i, b_i, y_i).
template <typename Visit>
PhasePoint rk6_step_visit(const Characteristics& ch, const PhasePoint& z, double h, Visit&& visit) {
    static constexpr double a[7][6] = {
        {0, 0, 0, 0, 0, 0},
        {1.0 / 3, 0, 0, 0, 0, 0},
        {0, 2.0 / 3, 0, 0, 0, 0},
        {1.0 / 12, 1.0 / 3, -1.0 / 12, 0, 0, 0},
        {-1.0 / 16, 9.0 / 8, -3.0 / 16, -3.0 / 8, 0, 0},
        {0, 9.0 / 8, -3.0 / 8, -3.0 / 4, 1.0 / 2, 0},
        {9.0 / 44, -9.0 / 11, 63.0 / 44, 18.0 / 11, 0, -16.0 / 11},
    };
    static constexpr double b[7] = {11.0 / 120, 0, 27.0 / 40, 27.0 / 40, -4.0 / 15, -4.0 / 15, 11.0 / 120};
    static constexpr double c[7] = {0, 1.0 / 3, 2.0 / 3, 1.0 / 3, 1.0 / 2, 1.0 / 2, 1};
    PhasePoint k[7];
    PhasePoint out = z;
    for (int i = 0; i < 7; ++i) {
        PhasePoint y = z;
        for (int j = 0; j < i; ++j) {
            y.x += h * a[i][j] * k[j].x;
            y.v1 += h * a[i][j] * k[j].v1;
            y.v2 += h * a[i][j] * k[j].v2;
        }
        k[i] = ch.velocity(y);
        visit(c[i], b[i], y);
        out.x += h * b[i] * k[i].x;
        out.v1 += h * b[i] * k[i].v1;
        out.v2 += h * b[i] * k[i].v2;
    }
    return out;
}

/// Point reached from p0 after time s, with the invariant-drift check.
PhasePoint flow(const PhasePoint& p0, double s, const FieldProfile& fields, int sign,
                const IntegratorConfig& cfg);

enum class OrbitKind { Trapped, Passing };

struct OrbitInfo {
    OrbitKind kind = OrbitKind::Passing;
    double tau = 0.0;   ///< return time
    int winding = 0;    ///< periods of x traversed forward per tau
    double closure = 0.0;  ///< scaled distance between start and return point
};

/// First return of (x mod P, v1, v2) to its start. Throws NoReturn for
/// stationary points and orbits not closing within cfg.max_orbit_time.
OrbitInfo orbit_info(const PhasePoint& p0, const FieldProfile& fields, int sign,
                     const IntegratorConfig& cfg);

/// Distance in the metric (x/P wrapped, v / (1 + |v_ref|)).
double scaled_distance(const PhasePoint& a, const PhasePoint& b, double period, double vref);

struct InvariantDrift {
    double de = 0.0;
    double dp = 0.0;
};

/// max |e(s) - e(0)|, |p(s) - p(0)| over the steps of s in [-s_max, 0].
InvariantDrift invariant_drift(const PhasePoint& p0, double s_max, const FieldProfile& fields,
                               int sign, const IntegratorConfig& cfg);

/// Writes "s,x,v1,v2,e,p" rows along the backward trajectory, at most max_points rows.
void dump_trajectory_csv(std::ostream& os, const PhasePoint& p0, double s_max,
                         const FieldProfile& fields, int sign, const IntegratorConfig& cfg,
                         int max_points = 10000);

}  // namespace vmstab
