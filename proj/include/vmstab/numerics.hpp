#pragma once

#include "vmstab/core.hpp"

#include <complex>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace vmstab {

struct QuadratureRule {
    Vector nodes;
    Vector weights;
};

/// Gauss-Legendre rule with n points on [a, b] (Golub-Welsch).
QuadratureRule gauss_legendre(int n, double a = -1.0, double b = 1.0);

/// Symmetric composite Gauss-Legendre rule on [-vmax, vmax]. Panels start at
/// width first_panel next to the origin and grow geometrically by ratio.
/// Nodes are ordered ascending and mirror-symmetric about zero.
QuadratureRule graded_gauss_legendre(double vmax, int points_per_panel, double first_panel = 1.0,
                                     double ratio = 2.0);

/// Integral of f over [a, b] by composite Gauss-Legendre on `panels` equal panels.
double integrate(const std::function<double(double)>& f, double a, double b, int panels = 64,
                 int points = 16);

/// Integral of f over [0, inf) assuming algebraic-or-faster decay; panels grow
/// geometrically until the panel contribution falls below rel_tol.
double integrate_half_line(const std::function<double(double)>& f, double rel_tol = 1e-15);

/// Real trigonometric interpolant of P-periodic samples on a uniform grid
/// x_j = j P / N. Stores cosine/sine coefficients up to the Nyquist mode.
class TrigInterpolant {
public:
    TrigInterpolant() = default;
    TrigInterpolant(std::span<const double> samples, double period);

    double operator()(double x) const;
    /// Value and first derivative together.
    std::pair<double, double> value_and_derivative(double x) const;
    /// Evaluates this interpolant and `other` (same grid) with one recurrence.
    std::pair<double, double> evaluate_with(const TrigInterpolant& other, double x) const;

    /// Samples of the spectral derivative on the same grid.
    Vector derivative_samples() const;
    /// Samples of the zero-mean spectral antiderivative (inverse of d/dx on
    /// zero-mean data); the mean of the input is ignored.
    Vector antiderivative_samples() const;
    /// Samples of the zero-mean solution u of u'' = f.
    Vector inverse_laplacian_samples() const;

    double mean() const { return a_.size() ? a_[0] : 0.0; }
    double period() const { return period_; }
    int size() const { return n_; }
    bool is_zero() const { return zero_; }

private:
    int n_ = 0;
    double period_ = 1.0;
    bool zero_ = true;
    std::vector<double> a_;  // cosine coefficients, a_[0] is the mean
    std::vector<double> b_;  // sine coefficients
};

/// Runs body(i) for i in [0, n) on `threads` workers with a static partition.
/// Each index is processed exactly once, so per-index outputs are independent
/// of the thread count.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

/// Geometric grid of `count` points from lo to hi inclusive.
std::vector<double> geometric_grid(double lo, double hi, int count);

/// 64-bit FNV-1a digest, used for manifest checksums.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);

}  // namespace vmstab
