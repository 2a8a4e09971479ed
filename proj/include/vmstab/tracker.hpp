#pragma once

#include "vmstab/averaging.hpp"
#include "vmstab/core.hpp"
#include "vmstab/operators.hpp"

#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace vmstab {

/// Zero threshold for a Hermitian matrix: 1e-9 ||H||_inf.
double zero_threshold(const Matrix& H);

/// Number of eigenvalues below -eps_zero.
int count_negatives(const Matrix& H, double eps_zero);
inline int count_negatives(const Matrix& H) { return count_negatives(H, zero_threshold(H)); }

struct SpectrumRecord {
    double T = kInf;
    int n = 0;
    Vector eigenvalues;  ///< ascending
    int neg = 0;
    double zero_margin = 0.0;  ///< smallest |eigenvalue|
    double eps_zero = 0.0;
};

SpectrumRecord spectrum_record(const Matrix& M, double T, int n);

/// Instability criterion from the limit operators:
///   neg(A2 + B^* A1^-1 B) > neg(A1) + neg(-l)
/// provided only the constants are in ker A1 (on the full periodic space).
struct CriterionReport {
    bool condition_i = false;
    int kernel_dim = 0;               ///< of A1_full
    double constant_overlap = 0.0;    ///< |<kernel vector, 1/sqrt(P)>| when kernel_dim == 1
    int lhs = 0;                      ///< neg of the Schur complement
    int rhs = 0;                      ///< neg(A1) on zero-mean functions + neg(-l)
    int neg_A1 = 0;
    int neg_minus_l = 0;              ///< 1 iff l > 0
    bool unstable_predicted = false;
    double l_inf = 0.0;
    Vector schur_eigenvalues;
    Vector A1_eigenvalues;
};

CriterionReport check_criterion(const OperatorSet& inf);
CriterionReport check_criterion(const EquilibriumSpec& eq, const DiscretizationSpec& disc);

/// Negative count of M_n^infinity by the block formula
///   neg(K_n) + n - dim ker(A1_n) - neg(A1_n) + neg(P l),
/// next to the direct count.
struct DiagL0 {
    int n = 0;
    int neg_K = 0;
    int dim_ker_A1 = 0;
    int neg_A1 = 0;
    int neg_l = 0;  ///< 1 iff l < 0 (the corner is P l)
    int formula = 0;
    int direct = 0;
    bool consistent() const { return formula == direct; }
};

DiagL0 diag_l0(const OperatorSet& inf, const Truncation& tr);

/// 1e-3 ... 1e4, 60 points, then infinity.
std::vector<double> default_T_grid();

struct SweepOptions {
    int n = 4;
    std::vector<double> T_grid = default_T_grid();
    bool check_anchor = true;  ///< neg = n + 1 at the smallest T
    bool allow_degenerate = false;
    double gap_tol = 1e-8;
    int threads = 1;
};

struct SweepResult {
    std::vector<SpectrumRecord> records;  ///< one per grid value, in grid order
    DiagL0 diag;                          ///< present when the grid contains infinity
    bool has_infinity = false;
    bool degenerate_cutoff = false;
    /// Adjacent finite grid values whose negative counts differ.
    std::vector<std::pair<double, double>> brackets;
};

/// Throws SmallTAnchorFailed if the anchor check is on and fails.
SweepResult sweep(const OperatorAssembler& as, const SweepOptions& opt);

/// The same over an arbitrary Hermitian family M(T) (no diag-l0 record).
SweepResult sweep(const std::function<Matrix(double)>& family, const SweepOptions& opt);

/// Negative counts at infinity for several n (for the stabilization check).
std::vector<DiagL0> diag_l0_series(const OperatorSet& inf, const std::vector<int>& ns, double gap_tol = 1e-8,
                                   bool allow_degenerate = true);

struct CrossingOptions {
    double rel_width = 1e-6;    ///< bisection stops at |T_hi - T_lo| < rel_width * T
    double eigen_tol = 1e-8;    ///< required ||M u|| / ||u||
    int max_iterations = 200;
};

struct CrossingReport {
    double T0 = 0.0;
    double T_lo = 0.0, T_hi = 0.0;
    int neg_lo = 0, neg_hi = 0;
    int n = 0;
    Vector u;       ///< kernel vector of M_n^T0 in the truncated coordinates
    Vector phi;     ///< zero-mean Fourier coefficients (2K)
    Vector psi;     ///< Fourier coefficients (2K + 1)
    double b = 0.0;
    double eigenvalue = 0.0;
    double eigen_residual = 0.0;  ///< ||M u|| / ||u||
    double branch_overlap = 0.0;  ///< |<u(T_lo), u(T_hi)>| of the tracked branch at the end
    double vlasov_residual = -1.0;  ///< filled by reconstruct_mode; negative if not computed
    int evaluations = 0;
};

/// Locates T0 in (T_lo, T_hi) where an eigenvalue of family(T) crosses zero.
/// Throws NoCrossing if the endpoint counts agree and BranchAmbiguity if more
/// than one eigenvalue still crosses inside the final bracket.
CrossingReport find_crossing(const std::function<Matrix(double)>& family, double T_lo, double T_hi,
                             const CrossingOptions& opt = {});

/// Crossing of the truncated operator M_n^T; fills phi, psi and b from the bases.
CrossingReport find_crossing(const OperatorAssembler& as, const Truncation& tr, double T_lo, double T_hi,
                             const CrossingOptions& opt = {});

/// f+- = +-mu_e phi +- mu_p psi -+ mu_e Q^T (phi - v2^ psi - b v1^) on a phase grid,
/// with the residual of (1/T + D) f - (right-hand side of the linearized Vlasov
/// equation), D applied by central differences along the flow with step h.
struct ModeOptions {
    double h = 0.05;
    int nx = 16;
    int points_per_panel = 4;  ///< momentum rule of the diagnostic grid
    double tail_tol = 1e-6;
    int threads = 1;
    AveragingConfig averaging;
};

struct ModeSamples {
    PhaseGrid grid;
    Vector f_plus, f_minus;
    double vlasov_residual = 0.0;  ///< sqrt of the summed squared weighted norms of both species
    double residual_plus = 0.0, residual_minus = 0.0;
    double norm = 0.0;             ///< weighted norm of (f+, f-)
    Index direct_nodes = 0;
};

ModeSamples reconstruct_mode(const Vector& phi, const Vector& psi, double b, double T0, const EquilibriumSpec& eq,
                             int K, const ModeOptions& opt = {});

void write_spectrum_csv(std::ostream& os, const std::vector<SpectrumRecord>& records);
std::string criterion_to_json(const CriterionReport& r);
std::string crossing_to_json(const CrossingReport& r);
std::string diag_l0_to_json(const DiagL0& d);

}  // namespace vmstab
