#pragma once

#include "vmstab/core.hpp"
#include "vmstab/equilibrium.hpp"
#include "vmstab/trajectories.hpp"

#include <complex>
#include <functional>
#include <ostream>
#include <span>
#include <vector>

namespace vmstab {

using Complex = std::complex<double>;
using ComplexVector = Eigen::VectorXcd;

/// Tensor grid x (uniform on [0,P)) times v1, v2 (momentum rule), with the
/// per-species weights w(e) at every node. Node n is (ix, i1, i2) with i2 fastest.
struct PhaseGrid {
    double period = 2 * kPi;
    Vector x;
    QuadratureRule v;
    Vector weight_plus;   ///< w+(e+) at each node
    Vector weight_minus;  ///< w-(e-) at each node

    Index nx() const { return x.size(); }
    Index nv() const { return v.nodes.size(); }
    Index size() const { return nx() * nv() * nv(); }
    PhasePoint node(Index n) const {
        const Index m = nv();
        return {x(n / (m * m)), v.nodes((n / m) % m), v.nodes(n % m)};
    }
    /// Phase-space measure dx dv1 dv2 of node n.
    double cell(Index n) const {
        const Index m = nv();
        return (period / nx()) * v.weights((n / m) % m) * v.weights(n % m);
    }
    const Vector& weight(int sign) const { return sign > 0 ? weight_plus : weight_minus; }
};

PhaseGrid make_phase_grid(const EquilibriumSpec& eq, int nx);

struct AveragingConfig {
    IntegratorConfig integrator;
    double eps_tail = 1e-10;     ///< truncation of the exponential weight
    double coef_tol = 1e-15;     ///< harmonics below coef_tol * max|g| on the orbit are dropped
    int min_samples = 32;        ///< samples per orbit period
    double fallback_factor = 1e3;  ///< T_big = fallback_factor * P for Q-infinity on NoReturn nodes
    int threads = 1;
};

/// Values of an averaged symbol at selected grid nodes.
struct AveragedSamples {
    ComplexVector values;
    double T = kInf;
    double tail_bound = 0.0;        ///< exp(-S_max/T) of the truncated integral
    double quadrature_error = 0.0;  ///< mass of dropped orbit harmonics
    Index fallback_nodes = 0;       ///< NoReturn nodes averaged by the direct route
};

/// Real symbols evaluated together at one phase point: out[j] = g_j(z).
using SymbolBatch = std::function<void(const PhasePoint&, std::span<double>)>;
using Symbol = std::function<Complex(const PhasePoint&)>;

/// Per-node record of a batch of symbols along the orbit through the node:
/// Q^T g_j = sum_m Re(coef / (1 + i omega_m T)), omega_m = 2 pi m / tau.
struct OrbitSpectrum {
    enum class Kind { Periodic, Stationary, Direct };
    Kind kind = Kind::Periodic;
    double tau = 0.0;
    int winding = 0;
    std::vector<int> offsets;  ///< symbol j owns entries [offsets[j], offsets[j+1])
    std::vector<int> harmonic;
    std::vector<Complex> coef;
    std::vector<double> value;  ///< symbol values at the node itself
    double dropped = 0.0;
};

/// Smallest n >= target of the form 2^a 3^b 5^c.
int fft_friendly_size(int target);

/// Fourier coefficients of g_j(Z(-u)) over one orbit period:
/// g_j(Z(-u)) = sum_m G(j, m) e^{2 pi i m u / tau}, stored for m = harmonic[i] >= 0
/// (negative m are the conjugates). Harmonics negligible for every symbol are dropped.
struct OrbitHarmonics {
    OrbitInfo info;
    int samples = 0;
    std::vector<int> harmonic;
    Eigen::MatrixXcd G;  ///< count x harmonic.size()
    double dropped = 0.0;  ///< largest dropped |G| relative to max |g|
};

/// Throws NoReturn if the orbit through z does not close (or z is stationary).
/// A positive time_scale (the shortest dynamical time along the orbit) lets slow
/// orbits take proportionally longer steps.
OrbitHarmonics orbit_harmonics(const PhasePoint& z, const FieldProfile& fields, int sign,
                               const SymbolBatch& batch, int count, const AveragingConfig& cfg,
                               double time_scale = 0.0);

/// Samples the batch over one period of the orbit through z and keeps its
/// significant harmonics; stationary points keep only the node values, and
/// orbits without a detected return are marked Direct.
OrbitSpectrum orbit_spectrum(const PhasePoint& z, const FieldProfile& fields, int sign,
                             const SymbolBatch& batch, int count, const AveragingConfig& cfg);

/// Q^T g_j at the point Z(t) of the same orbit (Periodic or Stationary spectra):
/// sum_m Re(coef e^{i omega_m t} / (1 + i omega_m T)).
double average_along(const OrbitSpectrum& s, int j, double T, double t = 0.0);

/// (1/T) int_{-S}^0 e^{s/T} g_j(Z(s)) ds with S = T ln(1/eps_tail), integrated with the
/// stages of the sixth-order flow; out has `count` entries.
void exponential_average_direct(const PhasePoint& z, double T, const FieldProfile& fields, int sign,
                                const SymbolBatch& batch, int count, const AveragingConfig& cfg,
                                std::span<double> out);

/// Orbit spectra of a symbol batch on a list of nodes; evaluates Q^T for any T.
class OrbitCache {
public:
    OrbitCache(const PhaseGrid& grid, std::vector<Index> nodes, const FieldProfile& fields, int sign,
               SymbolBatch batch, int count, const AveragingConfig& cfg);

    /// Rows: nodes, columns: symbols. T = kInf gives the orbit averages.
    Matrix apply(double T) const;
    /// Symbol values at the nodes (the T -> 0 limit).
    Matrix values() const;

    const std::vector<Index>& nodes() const { return nodes_; }
    int count() const { return count_; }
    Index direct_nodes() const { return direct_; }
    Index stationary_nodes() const { return stationary_; }
    double dropped_mass() const { return dropped_; }
    const OrbitSpectrum& spectrum(std::size_t i) const { return spectra_[i]; }

private:
    const PhaseGrid* grid_;
    const FieldProfile* fields_;
    int sign_;
    SymbolBatch batch_;
    int count_;
    AveragingConfig cfg_;
    std::vector<Index> nodes_;
    std::vector<OrbitSpectrum> spectra_;
    Index direct_ = 0;
    Index stationary_ = 0;
    double dropped_ = 0.0;
};

/// Q^T g at every grid node (T finite).
AveragedSamples apply_QT(const Symbol& g, double T, const PhaseGrid& grid, int sign,
                         const FieldProfile& fields, const AveragingConfig& cfg);

/// Q^infinity g at every grid node: orbit averages, with the large-T exponential
/// average on nodes without a detected return.
AveragedSamples apply_Qinf(const Symbol& g, const PhaseGrid& grid, int sign,
                           const FieldProfile& fields, const AveragingConfig& cfg);

/// Discrete weighted norm ||g||_sign = (sum cell * w * |g|^2)^(1/2).
double weighted_norm(const ComplexVector& g, const PhaseGrid& grid, int sign);

/// Symbol values on the grid.
ComplexVector sample(const Symbol& g, const PhaseGrid& grid);

/// max ||Q^T g|| / ||g|| over random trigonometric probes (fixed seed).
double qt_operator_norm_probe(double T, const PhaseGrid& grid, int sign, const FieldProfile& fields,
                              int trials, const AveragingConfig& cfg = {}, std::uint64_t seed = 7);

/// Writes "x,v1,v2,re,im" rows.
void dump_samples_csv(std::ostream& os, const AveragedSamples& s, const PhaseGrid& grid);

}  // namespace vmstab
