#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>

namespace vmstab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Base of every error raised by the library. The kind string is stable and
// is what the CLI layer reports.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define VMSTAB_DEFINE_ERROR(Name)                                           \
    class Name : public Error {                                             \
    public:                                                                 \
        explicit Name(const std::string& what) : Error(#Name, what) {}      \
    };

VMSTAB_DEFINE_ERROR(InvalidArgument)
VMSTAB_DEFINE_ERROR(QuadratureTailError)
VMSTAB_DEFINE_ERROR(NonConvergence)
VMSTAB_DEFINE_ERROR(NeutralityViolation)
VMSTAB_DEFINE_ERROR(DriftExceeded)
VMSTAB_DEFINE_ERROR(NoReturn)
VMSTAB_DEFINE_ERROR(AsymmetryTooLarge)
VMSTAB_DEFINE_ERROR(DegenerateCutoff)
VMSTAB_DEFINE_ERROR(KernelOverlap)
VMSTAB_DEFINE_ERROR(SmallTAnchorFailed)
VMSTAB_DEFINE_ERROR(NoCrossing)
VMSTAB_DEFINE_ERROR(BranchAmbiguity)
VMSTAB_DEFINE_ERROR(TruncationError)
VMSTAB_DEFINE_ERROR(ConfigError)
VMSTAB_DEFINE_ERROR(PipelineError)

#undef VMSTAB_DEFINE_ERROR

/// Relativistic Lorentz factor <v> = sqrt(1 + |v|^2).
inline double lorentz(double v1, double v2) { return std::sqrt(1.0 + v1 * v1 + v2 * v2); }

/// Infinity norm of a dense matrix (maximum absolute row sum).
template <typename Derived>
double norm_inf(const Eigen::MatrixBase<Derived>& m) {
    if (m.size() == 0) return 0.0;
    return m.cwiseAbs().rowwise().sum().maxCoeff();
}

/// Hermitian part (A + A^*) / 2.
template <typename Derived>
typename Derived::PlainObject hermitian_part(const Eigen::MatrixBase<Derived>& m) {
    return (m + m.adjoint()) / 2;
}

}  // namespace vmstab
