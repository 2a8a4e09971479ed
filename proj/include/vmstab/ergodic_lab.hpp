#pragma once

#include "vmstab/core.hpp"

#include <complex>
#include <functional>
#include <string>
#include <vector>

namespace vmstab {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;

/// Largest |eigenvalue| of a symmetric matrix. Lanczos with full
/// reorthogonalization from a fixed start vector, doubling the Krylov dimension
/// until the extreme Ritz value settles; dense solve for small sizes.
double symmetric_spectral_radius(const Matrix& B);

/// Positive weight w in L^1 and L^infinity of the line.
struct WeightSpec {
    std::string name;
    std::function<double(double)> w;
    double L = 1e4;          ///< truncation half-width used for the integral
    double L1_norm = 0.0;    ///< integral over the line (truncated part + tails)
    double sup_norm = 0.0;
    double tail_left = 0.0;  ///< mass on (-inf, -L)
    double tail_right = 0.0; ///< mass on (L, inf)
    bool analytic_tail = false;
};

/// Builds a weight: integrates w over [-L, L] and adds the tails, either from
/// the supplied closed forms or by quadrature on the half lines. Without closed
/// forms the tails must hold less than 1e-8 of the total (TruncationError).
WeightSpec make_weight(std::string name, std::function<double(double)> w, double L,
                       std::function<double(double)> tail_right = {},
                       std::function<double(double)> tail_left = {});

/// w(x) = 1 / (1 + x^2), ||w||_1 = pi, with closed-form tails.
WeightSpec lorentzian_weight(double L = 1e4);

enum class DerivativeScheme { Spectral, FiniteDifference4 };
std::string to_string(DerivativeScheme s);

struct LineDiscretization {
    double L = 1e6;   ///< half-width of the L^{2,sigma} surrogate interval
    int N = 129;      ///< grid points (weighted problem) or cells (L^{2,sigma}; 1024 is adequate)
    double sigma = 1.0;
    DerivativeScheme scheme = DerivativeScheme::Spectral;
};

/// Eigenpairs of -i w^{-1} d/dx with f(+inf) = alpha f(-inf).
///
/// The grid is uniform in y = int_0^x w, which turns the operator into -i d/dy
/// on a circle of length ||w||_1 closed by the twist alpha.
struct WeightedSpectrum {
    double beta = 0.0;         ///< alpha = e^{i beta}, beta in [0, 2 pi)
    double L1_norm = 0.0;
    Vector y;                  ///< nodes in the mapped coordinate
    Vector x;                  ///< the same nodes on the line
    Vector eigenvalues;        ///< ascending
    ComplexMatrix eigenvectors;
    double hermitian_residual = 0.0;  ///< ||H - H^*||_inf / ||H||_inf in the w-inner product
    DerivativeScheme scheme = DerivativeScheme::Spectral;
};

/// Twisted derivative -i w^{-1} d/dx on the mapped grid (before any symmetrization).
ComplexMatrix weighted_operator(const WeightSpec& w, Complex alpha, const LineDiscretization& disc);

WeightedSpectrum weighted_eigs(const WeightSpec& w, Complex alpha, const LineDiscretization& disc);

/// lambda_k^beta = (beta + 2 pi k) / ||w||_1 for k in [k_lo, k_hi].
std::vector<double> predicted_eigs(double L1_norm, double beta, int k_lo, int k_hi);

/// Largest relative deviation from the predicted eigenvalues over |k| <= kmax
/// (absolute for a zero eigenvalue), matching each prediction to the nearest
/// computed eigenvalue. L1_norm > 0 replaces the stored norm in the prediction.
double eigenvalue_error(const WeightedSpectrum& s, int kmax, double L1_norm = 0.0);

/// sup_{s >= a} |sin s / s| (1 for a <= 0).
double sinc_envelope(double a);

struct FilterResult {
    double T = 0.0;
    double operator_norm = 0.0;  ///< at this T
    double envelope = 0.0;       ///< sup over T' >= T (weighted case; equals operator_norm otherwise)
};

struct FilterSeries {
    std::vector<FilterResult> points;
    double decay_fit_exponent = 0.0;    ///< log-log slope of the envelope (weighted) or the norm (L^{2,sigma})
    double pointwise_exponent = 0.0;    ///< log-log slope of the raw norm
    int kernel_dim = 0;
    double gap = 0.0;                   ///< smallest nonzero |lambda|
};

/// || (1/2T) int_{-T}^{T} e^{itH} dt - P || from the spectrum: the largest |sinc(lambda T)|
/// over nonzero eigenvalues, P the projector onto the kernel.
FilterResult ergodic_norm_weighted(const WeightedSpectrum& s, double T);
FilterSeries ergodic_series_weighted(const WeightedSpectrum& s, const std::vector<double>& Ts);

/// Norm of the time average of translations, (1/2T) int_{-T}^{T} f(x + t) dt, as a map
/// from the <x>^sigma-weighted L^2 to the <x>^{-sigma}-weighted L^2. Galerkin on
/// piecewise constants over sinh-graded cells on [-L, L].
FilterResult ergodic_norm_L2sigma(double T, const LineDiscretization& disc);
FilterSeries ergodic_series_L2sigma(const std::vector<double>& Ts, const LineDiscretization& disc,
                                    int threads = 1);

/// Tail projectors pi_N onto span{e_k : k >= N} of an orthonormal basis of R^dim.
struct ProjectorRow {
    int N = 0;
    int ones = 0;               ///< eigenvalues equal to 1
    int zeros = 0;              ///< eigenvalues equal to 0
    double max_defect = 0.0;    ///< max distance of an eigenvalue from {0, 1}
    double norm = 0.0;          ///< ||pi_N||
    double finite_norm = 0.0;   ///< ||pi_N f|| for f with a finite expansion
    double decaying_norm = 0.0; ///< ||pi_N g||, g_k = 1 / (k + 1)
};

struct ProjectorDemo {
    int dim = 0;
    int finite_support = 0;
    std::vector<ProjectorRow> rows;
};

ProjectorDemo projector_demo(const std::vector<int>& N_list, int dim = 64, int finite_support = 4,
                             unsigned seed = 7);

std::string weighted_spectrum_to_json(const WeightedSpectrum& s, int kmax);
std::string filter_series_csv(const FilterSeries& s);
std::string projector_demo_to_json(const ProjectorDemo& d);

}  // namespace vmstab
