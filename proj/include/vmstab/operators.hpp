#pragma once

#include "vmstab/averaging.hpp"
#include "vmstab/core.hpp"
#include "vmstab/equilibrium.hpp"
#include "vmstab/orbit_quadrature.hpp"

#include <memory>
#include <string>
#include <vector>

namespace vmstab {

/// Galerkin truncation: real Fourier basis |k| <= K on [0,P), orthonormal in L^2_P,
/// ordered 1/sqrt(P), then cos/sin pairs. The zero-mean space drops the constant.
struct DiscretizationSpec {
    int K = 4;
    int nx = 16;                  ///< x-nodes of the diagnostic phase grid
    double asymmetry_tol = 1e-6;  ///< relative, checked before symmetrization
    double prune_tol = 1e-10;     ///< share of int |mu_e| + |mu_p| that orbit pruning may drop
    AveragingConfig averaging;
    OrbitQuadratureSettings orbits;

    int phi_dim() const { return 2 * K; }
    int psi_dim() const { return 2 * K + 1; }
};

/// Basis functions at x: out has 2K+1 entries.
Vector fourier_basis(double x, double period, int K);

/// Operator blocks at one T (kInf for the limit operators).
struct OperatorSet {
    double T = kInf;
    int K = 0;
    double period = 2 * kPi;
    Matrix A1;       ///< zero-mean phi-space, 2K x 2K
    Matrix A1_full;  ///< with the constants, (2K+1) x (2K+1)
    Matrix A2;       ///< psi-space, (2K+1) x (2K+1)
    Matrix B;        ///< phi-space x psi-space
    Matrix B_full;   ///< with the constant phi row, (2K+1) x (2K+1)
    Vector C;        ///< phi-space
    Vector D;        ///< psi-space
    double l = 0.0;
    double asymmetry_A1 = 0.0;  ///< ||raw - raw^T||_inf / ||raw||_inf
    double asymmetry_A2 = 0.0;
    double asymmetry_M = 0.0;
    double parity_residual = 0.0;  ///< |C|, |D| before they are zeroed at T = infinity
    Index nv = 0;      ///< momentum nodes of the invariant quadrature
    double vmax = 0.0;
    Index orbits = 0;

    bool infinite() const { return T == kInf; }
};

/// Samples the orbits once; assemble() is then cheap for any T.
class OperatorAssembler {
public:
    OperatorAssembler(const EquilibriumSpec& eq, const DiscretizationSpec& disc);
    ~OperatorAssembler();
    OperatorAssembler(OperatorAssembler&&) noexcept;

    /// Throws AsymmetryTooLarge if a pre-symmetrization residual exceeds the tolerance.
    OperatorSet assemble(double T) const;

    const DiscretizationSpec& discretization() const { return disc_; }
    const PhaseGrid& grid() const;
    double period() const;
    Index orbit_count() const;
    /// Orbits whose return was not detected; they are left out of the quadrature.
    Index skipped_orbits() const;
    const OrbitQuadrature* quadrature(int sign) const;

private:
    struct Species;
    DiscretizationSpec disc_;
    std::unique_ptr<PhaseGrid> grid_;
    std::unique_ptr<FieldProfile> fields_;
    std::vector<std::unique_ptr<Species>> species_;
    double period_ = 2 * kPi;
    Index nv_ = 0;
    double vmax_ = 0.0;
};

OperatorSet assemble(double T, const EquilibriumSpec& eq, const DiscretizationSpec& disc);

/// [[-A1, B, C], [B^T, A2, -D], [C^T, -D^T, -P (T^-2 - l)]]; at T = infinity C = D = 0
/// and the corner is P l.
struct BlockOperator {
    double T = kInf;
    Matrix M;
    int phi_dim = 0;
    int psi_dim = 0;
};

BlockOperator build_M(const OperatorSet& set);

/// Eigenvector bases of A1^infinity and A2^infinity for the first n eigenvalues.
struct Truncation {
    int n = 0;
    Matrix Pn;  ///< 2K x n
    Matrix Qn;  ///< (2K+1) x n
    double gap_A1 = 0.0;  ///< eigenvalue n+1 minus eigenvalue n (infinity if n is the dimension)
    double gap_A2 = 0.0;
    bool degenerate = false;
};

/// Throws DegenerateCutoff when eigenvalues n and n+1 are closer than gap_tol (relative)
/// unless allow_degenerate is set, in which case the flag is recorded.
Truncation make_truncation(const OperatorSet& inf, int n, double gap_tol = 1e-8,
                           bool allow_degenerate = false);

struct TruncatedOperator {
    int n = 0;
    double T = kInf;
    Matrix Pn, Qn;
    Matrix Mn;  ///< (2n+1) x (2n+1)
};

TruncatedOperator truncate(const OperatorSet& set, const Truncation& tr);
TruncatedOperator truncate(const OperatorSet& set, const OperatorSet& inf, int n, double gap_tol = 1e-8);

/// Blocks of a truncated operator in the projected bases.
struct TruncatedBlocks {
    Matrix A1, A2, B;
    double l = 0.0;
};
TruncatedBlocks truncated_blocks(const OperatorSet& set, const Truncation& tr);

/// K = A2 + B^T A1^+ B with the pseudo-inverse cutting singular values below
/// 1e-10 sigma_max. Throws KernelOverlap if B has a component in ker A1 above 1e-8.
Matrix schur_complement(const Matrix& A1, const Matrix& A2, const Matrix& B);
Matrix schur_infty(const OperatorSet& inf);

/// JSON container with metadata; the round trip is exact.
std::string operator_set_to_json(const OperatorSet& s);
OperatorSet operator_set_from_json(const std::string& text);
std::string block_operator_to_json(const BlockOperator& b);
BlockOperator block_operator_from_json(const std::string& text);

}  // namespace vmstab
