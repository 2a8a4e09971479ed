#pragma once

#include "vmstab/core.hpp"
#include "vmstab/numerics.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace vmstab {

/// Distribution of one species as a function of the invariants (e, p), with
/// its exact partial derivatives.
struct SpeciesProfile {
    using Fn = std::function<double(double, double)>;

    std::string name = "zero";
    Fn mu = [](double, double) { return 0.0; };
    Fn mu_e = [](double, double) { return 0.0; };
    Fn mu_p = [](double, double) { return 0.0; };
    double alpha = 3.0;  ///< decay exponent of the weight, > 2
    double c = 1.0;      ///< weight amplitude, > 0
    int sign = +1;       ///< species charge

    /// w(e) = c (1 + |e|)^(-alpha)
    double weight(double e) const { return c * std::pow(1.0 + std::abs(e), -alpha); }
    bool is_zero() const { return name == "zero"; }
};

/// Parameters understood by the built-in species catalog.
struct SpeciesParams {
    double density = 1.0;     ///< amplitude, normalized so that the isotropic profile has this density
    double theta = 1.0;       ///< temperature
    double drift = 0.0;       ///< shifted-maxwellian: coefficient u of p in exp(-(e - u p)/theta)
    double anisotropy = 0.0;  ///< anisotropic: coefficient s in (1 + s p^2)
    double alpha = 3.0;
    double c = 0.0;  ///< weight amplitude; <= 0 selects it automatically
};

/// Catalog entries: "zero", "relativistic-maxwellian", "shifted-maxwellian", "anisotropic".
SpeciesProfile make_species(const std::string& name, const SpeciesParams& params, int sign);
std::vector<std::string> species_catalog();

/// Normalization of exp(-<v>/theta) over the momentum plane: 2 pi theta (1 + theta) e^(-1/theta).
double maxwellian_normalization(double theta);

/// Periodic equilibrium potentials and fields sampled on a uniform grid.
class FieldProfile {
public:
    FieldProfile() = default;
    /// Builds E1 = -phi0' and B0 = psi0' by spectral differentiation.
    FieldProfile(double period, Vector phi0, Vector psi0);
    static FieldProfile zero(double period, int nx);
    /// phi0 = phi_amp cos(2 pi x / P), psi0 = psi_amp cos(2 pi x / P)
    static FieldProfile cosine(double period, int nx, double phi_amp, double psi_amp);

    double period() const { return period_; }
    int size() const { return static_cast<int>(x_.size()); }
    const Vector& x() const { return x_; }
    const Vector& phi0() const { return phi0_; }
    const Vector& psi0() const { return psi0_; }
    const Vector& e1() const { return e1_; }
    const Vector& b0() const { return b0_; }
    bool is_zero() const { return zero_; }

    /// (phi0, psi0) at arbitrary x by trigonometric interpolation.
    std::pair<double, double> potentials(double x) const {
        if (zero_) return {0.0, 0.0};
        return phi_.evaluate_with(psi_, x);
    }
    /// (E1_0, B0) at arbitrary x.
    std::pair<double, double> forces(double x) const {
        if (zero_) return {0.0, 0.0};
        return e1i_.evaluate_with(bi_, x);
    }
    double max_abs_phi() const { return phi0_.size() ? phi0_.cwiseAbs().maxCoeff() : 0.0; }
    double max_abs_psi() const { return psi0_.size() ? psi0_.cwiseAbs().maxCoeff() : 0.0; }

private:
    double period_ = 2 * kPi;
    bool zero_ = true;
    Vector x_, phi0_, psi0_, e1_, b0_;
    TrigInterpolant phi_, psi_, e1i_, bi_;
};

/// Momentum-plane quadrature shared by moments and the phase grid.
struct VelocitySettings {
    double vmax = 0.0;  ///< <= 0: choose from tail_tol
    double tail_tol = 1e-8;
    int points_per_panel = 6;
    double first_panel = 1.0;
    double panel_ratio = 2.0;
};

struct VelocityQuadrature {
    QuadratureRule rule;  ///< 1D rule on [-vmax, vmax], used as a tensor product
    double vmax = 0.0;
    double tail_estimate = 0.0;
};

struct EquilibriumSpec {
    SpeciesProfile plus;
    SpeciesProfile minus;
    FieldProfile fields;
    VelocityQuadrature velocity;
    double consistency_residual = 0.0;
    bool validated = false;

    const SpeciesProfile& species(int sign) const { return sign > 0 ? plus : minus; }
};

/// Energy and momentum invariants e = <v> + sign phi0(x), p = v2 + sign psi0(x).
std::pair<double, double> invariants_of(double x, double v1, double v2, const FieldProfile& fields,
                                        int sign);

/// Relative truncation error of the momentum integral outside |v| <= vmax,
/// estimated from the radial envelope of |mu| over all x-nodes and both species.
double velocity_tail_estimate(const SpeciesProfile& plus, const SpeciesProfile& minus,
                              const FieldProfile& fields, double vmax);

/// Resolves vmax (if automatic) and builds the tensor rule. Throws
/// QuadratureTailError if an explicit vmax leaves a tail above tail_tol.
VelocityQuadrature make_velocity_quadrature(const SpeciesProfile& plus, const SpeciesProfile& minus,
                                            const FieldProfile& fields, const VelocitySettings& s);

struct Moments {
    double rho0 = 0.0;
    double j2 = 0.0;
};

/// Charge and transverse current density at x.
Moments moments(const EquilibriumSpec& eq, double x);

/// max over nodes of Poisson/Ampere residuals |phi0'' + rho0|, |psi0'' + j2|.
double consistency_residual(const EquilibriumSpec& eq);

struct PotentialSolveOptions {
    double tol = 1e-10;
    int max_iterations = 500;
    double damping = 0.5;
    std::optional<std::pair<Vector, Vector>> initial_guess;  ///< (phi0, psi0) nodal values
};

struct PotentialSolution {
    FieldProfile fields;
    double residual = 0.0;
    int iterations = 0;
};

/// Damped Picard iteration for the self-consistent zero-mean potentials.
PotentialSolution solve_potentials(const SpeciesProfile& plus, const SpeciesProfile& minus,
                                   double period, int nx, const VelocitySettings& velocity,
                                   const PotentialSolveOptions& options = {});

/// Assembles an EquilibriumSpec for given fields and records its consistency residual.
EquilibriumSpec make_equilibrium(SpeciesProfile plus, SpeciesProfile minus, FieldProfile fields,
                                 const VelocitySettings& velocity, double validation_tol = 1e-8);

struct IntegrabilityDomain {
    double e_min = 1.0;
    double e_max = 20.0;
    double p_margin = 0.0;  ///< |p| sampled up to sqrt(e^2 - 1) + p_margin
};

struct IntegrabilityReport {
    double max_ratio = 0.0;
    bool pass = true;
};

/// Samples (|mu_e| + |mu_p|) / (c (1 + |e|)^(-alpha)) on sample_count energies
/// (and a fixed fan of momenta per energy).
IntegrabilityReport validate_integrability(const SpeciesProfile& profile, int sample_count,
                                           const IntegrabilityDomain& domain = {});

}  // namespace vmstab
