#pragma once

#include "vmstab/averaging.hpp"
#include "vmstab/core.hpp"
#include "vmstab/equilibrium.hpp"

#include <functional>
#include <vector>

namespace vmstab {

/// Phase-space quadrature organised by orbits. With e, p as coordinates,
/// dx dv1 dv2 = dx de dp / |v1^| and dx / |v1^| is time along the orbit, so
///   int F dx dv = int de dp  sum_{orbits at (e,p)} int_0^tau F(Z(t)) dt.
/// The time integrals are done spectrally on each closed orbit, which makes
/// the pairing <g, Q^T h> symmetric up to the integration error of the flow.
struct OrbitQuadratureSettings {
    int points_per_panel = 6;
    int momentum_points = 6;        ///< per panel of the p rule; 0: points_per_panel
    double panel_width = 0.5;       ///< in sqrt(e - e_critical)
    int separatrix_levels = 4;      ///< geometric panels toward each critical energy
    double separatrix_ratio = 0.2;
    int scan_points = 512;          ///< effective-potential samples per period
    /// Orbits are skipped, least important first, while their estimated share of
    /// int |mu| dx dv stays below prune_tol.
    double prune_tol = 1e-10;
    /// Harmonics below this (relative to max |g|) are dropped; products of the
    /// kept ones are then accurate to about its square.
    double harmonic_tol = 1e-9;
};

struct OrbitNode {
    double e = 0.0;
    double p = 0.0;
    double weight = 0.0;  ///< de dp quadrature weight
    bool trapped = false;
    PhasePoint start;
    double tau = 0.0;
    double tau_estimate = 0.0;  ///< from the effective-potential scan, before integration
    int winding = 0;
    int samples = 0;
    int harmonics = 0;
};

/// Effective potential U_p(x) = sign phi0(x) + sqrt(1 + (p - sign psi0(x))^2):
/// the orbits at (e,p) live on the components of {U_p <= e}.
double effective_potential(double x, double p, const FieldProfile& fields, int sign);

class OrbitQuadrature {
public:
    /// mass(e,p) >= 0 decides which nodes matter; batch/count are the symbols
    /// whose orbit harmonics are kept.
    OrbitQuadrature(const EquilibriumSpec& eq, int sign, SymbolBatch batch, int count,
                    const std::function<double(double, double)>& mass, const AveragingConfig& cfg,
                    const OrbitQuadratureSettings& s = {});

    /// G(j,k) = sum_q w_q tau_q Re sum_m conj(g_j,m) kappa_m(T) g_k,m: the quadrature of
    /// int w g_j (Q^T g_k). T = 0 gives plain products, kInf orbit averages.
    /// w_q already carries the de dp weight of orbit q.
    Matrix gram(const Vector& w, double T) const;

    /// Quadrature of int w(e,p) dx dv; w_q again includes the orbit weight.
    double integrate(const Vector& w) const;

    const std::vector<OrbitNode>& orbits() const { return orbits_; }
    int count() const { return count_; }
    Index p_nodes() const { return p_nodes_; }
    /// Orbits without a detected return, left out of the quadrature.
    Index skipped() const { return skipped_; }
    double skipped_weight() const { return skipped_weight_; }
    double dropped() const { return dropped_; }
    double pruned_share() const { return pruned_share_; }
    Index stored_harmonics() const;

private:
    int count_;
    std::vector<OrbitNode> orbits_;
    std::vector<std::vector<int>> harmonic_;
    std::vector<int> samples_;
    std::vector<Eigen::MatrixXcd> coef_;
    Index p_nodes_ = 0;
    Index skipped_ = 0;
    double skipped_weight_ = 0.0;
    double dropped_ = 0.0;
    double pruned_share_ = 0.0;
};

}  // namespace vmstab
