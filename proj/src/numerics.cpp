#include "vmstab/numerics.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cstdio>
#include <thread>

namespace vmstab {

QuadratureRule gauss_legendre(int n, double a, double b) {
    if (n < 1) throw InvalidArgument("gauss_legendre needs n >= 1");
    Matrix jacobi = Matrix::Zero(n, n);
    for (int k = 1; k < n; ++k) {
        const double beta = k / std::sqrt(4.0 * k * k - 1.0);
        jacobi(k, k - 1) = beta;
        jacobi(k - 1, k) = beta;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(jacobi);
    QuadratureRule rule{Vector(n), Vector(n)};
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    for (int k = 0; k < n; ++k) {
        // Symmetrize node pairs so mirrored rules are exactly mirrored.
        const double t = 0.5 * (es.eigenvalues()(k) - es.eigenvalues()(n - 1 - k));
        const double v0 = es.eigenvectors()(0, k);
        const double v1 = es.eigenvectors()(0, n - 1 - k);
        rule.nodes(k) = mid + half * t;
        rule.weights(k) = half * (v0 * v0 + v1 * v1);
    }
    return rule;
}

QuadratureRule graded_gauss_legendre(double vmax, int points_per_panel, double first_panel,
                                     double ratio) {
    if (!(vmax > 0) || points_per_panel < 1 || !(first_panel > 0) || !(ratio >= 1))
        throw InvalidArgument("graded_gauss_legendre: bad parameters");
    std::vector<double> edges{0.0};
    double width = first_panel;
    while (edges.back() < vmax) {
        double next = edges.back() + width;
        // Absorb a sliver into the last panel instead of creating a tiny one.
        if (next > vmax || vmax - next < 0.25 * width) next = vmax;
        edges.push_back(next);
        width *= ratio;
    }
    std::vector<double> pos_nodes, pos_weights;
    for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
        const auto r = gauss_legendre(points_per_panel, edges[p], edges[p + 1]);
        for (int k = 0; k < points_per_panel; ++k) {
            pos_nodes.push_back(r.nodes(k));
            pos_weights.push_back(r.weights(k));
        }
    }
    const Index m = static_cast<Index>(pos_nodes.size());
    QuadratureRule rule{Vector(2 * m), Vector(2 * m)};
    for (Index k = 0; k < m; ++k) {
        rule.nodes(m - 1 - k) = -pos_nodes[k];
        rule.weights(m - 1 - k) = pos_weights[k];
        rule.nodes(m + k) = pos_nodes[k];
        rule.weights(m + k) = pos_weights[k];
    }
    return rule;
}

double integrate(const std::function<double(double)>& f, double a, double b, int panels,
                 int points) {
    const auto ref = gauss_legendre(points);
    const double h = (b - a) / panels;
    double sum = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double lo = a + p * h;
        double part = 0.0;
        for (int k = 0; k < points; ++k)
            part += ref.weights(k) * f(lo + 0.5 * h * (ref.nodes(k) + 1.0));
        sum += 0.5 * h * part;
    }
    return sum;
}

double integrate_half_line(const std::function<double(double)>& f, double rel_tol) {
    const auto ref = gauss_legendre(20);
    auto panel = [&](double lo, double hi) {
        double part = 0.0;
        for (int k = 0; k < 20; ++k)
            part += ref.weights(k) * f(lo + 0.5 * (hi - lo) * (ref.nodes(k) + 1.0));
        return 0.5 * (hi - lo) * part;
    };
    double sum = 0.0;
    for (double lo = 0.0, hi = 0.25; lo < 1.0; lo = hi, hi += 0.25) sum += panel(lo, hi);
    int quiet = 0;
    for (double lo = 1.0; lo < 1e300; lo *= 1.5) {
        const double part = panel(lo, 1.5 * lo);
        sum += part;
        if (std::abs(part) <= rel_tol * std::abs(sum)) {
            if (++quiet >= 8) break;
        } else {
            quiet = 0;
        }
    }
    return sum;
}

TrigInterpolant::TrigInterpolant(std::span<const double> samples, double period)
    : n_(static_cast<int>(samples.size())), period_(period) {
    if (n_ < 1 || !(period > 0)) throw InvalidArgument("TrigInterpolant: empty grid or bad period");
    const int kmax = n_ / 2;
    a_.assign(kmax + 1, 0.0);
    b_.assign(kmax + 1, 0.0);
    for (int k = 0; k <= kmax; ++k) {
        double ca = 0.0, sb = 0.0;
        for (int j = 0; j < n_; ++j) {
            const double th = 2.0 * kPi * k * j / n_;
            ca += samples[j] * std::cos(th);
            sb += samples[j] * std::sin(th);
        }
        const bool nyquist = (n_ % 2 == 0) && k == kmax;
        const double scale = (k == 0 || nyquist) ? 1.0 / n_ : 2.0 / n_;
        a_[k] = scale * ca;
        // The Nyquist sine mode vanishes on the grid; drop it.
        b_[k] = nyquist ? 0.0 : scale * sb;
    }
    zero_ = std::all_of(samples.begin(), samples.end(), [](double s) { return s == 0.0; });
}

double TrigInterpolant::operator()(double x) const {
    if (zero_) return 0.0;
    const double th = 2.0 * kPi * x / period_;
    const double c1 = std::cos(th), s1 = std::sin(th);
    double ck = 1.0, sk = 0.0, sum = a_[0];
    for (std::size_t k = 1; k < a_.size(); ++k) {
        const double cn = ck * c1 - sk * s1;
        sk = sk * c1 + ck * s1;
        ck = cn;
        sum += a_[k] * ck + b_[k] * sk;
    }
    return sum;
}

std::pair<double, double> TrigInterpolant::value_and_derivative(double x) const {
    if (zero_) return {0.0, 0.0};
    const double w = 2.0 * kPi / period_;
    const double th = w * x;
    const double c1 = std::cos(th), s1 = std::sin(th);
    double ck = 1.0, sk = 0.0, val = a_[0], der = 0.0;
    const bool even = n_ % 2 == 0;
    const std::size_t kmax = a_.size() - 1;
    for (std::size_t k = 1; k < a_.size(); ++k) {
        const double cn = ck * c1 - sk * s1;
        sk = sk * c1 + ck * s1;
        ck = cn;
        val += a_[k] * ck + b_[k] * sk;
        if (!(even && k == kmax)) der += w * k * (-a_[k] * sk + b_[k] * ck);
    }
    return {val, der};
}

std::pair<double, double> TrigInterpolant::evaluate_with(const TrigInterpolant& other,
                                                        double x) const {
    if (zero_ && other.zero_) return {0.0, 0.0};
    if (other.n_ != n_) return {(*this)(x), other(x)};
    const double th = 2.0 * kPi * x / period_;
    const double c1 = std::cos(th), s1 = std::sin(th);
    double ck = 1.0, sk = 0.0, u = a_[0], v = other.a_[0];
    for (std::size_t k = 1; k < a_.size(); ++k) {
        const double cn = ck * c1 - sk * s1;
        sk = sk * c1 + ck * s1;
        ck = cn;
        u += a_[k] * ck + b_[k] * sk;
        v += other.a_[k] * ck + other.b_[k] * sk;
    }
    return {u, v};
}

namespace {
Vector synthesize(const std::vector<double>& a, const std::vector<double>& b, int n) {
    Vector out(n);
    for (int j = 0; j < n; ++j) {
        double s = a[0];
        for (std::size_t k = 1; k < a.size(); ++k) {
            const double th = 2.0 * kPi * k * j / n;
            s += a[k] * std::cos(th) + b[k] * std::sin(th);
        }
        out(j) = s;
    }
    return out;
}
}  // namespace

Vector TrigInterpolant::derivative_samples() const {
    const double w = 2.0 * kPi / period_;
    std::vector<double> a(a_.size(), 0.0), b(b_.size(), 0.0);
    const bool even = n_ % 2 == 0;
    for (std::size_t k = 1; k < a_.size(); ++k) {
        if (even && k == a_.size() - 1) continue;
        a[k] = w * k * b_[k];
        b[k] = -w * k * a_[k];
    }
    return synthesize(a, b, n_);
}

Vector TrigInterpolant::antiderivative_samples() const {
    const double w = 2.0 * kPi / period_;
    std::vector<double> a(a_.size(), 0.0), b(b_.size(), 0.0);
    const bool even = n_ % 2 == 0;
    for (std::size_t k = 1; k < a_.size(); ++k) {
        if (even && k == a_.size() - 1) continue;
        a[k] = -b_[k] / (w * k);
        b[k] = a_[k] / (w * k);
    }
    return synthesize(a, b, n_);
}

Vector TrigInterpolant::inverse_laplacian_samples() const {
    const double w = 2.0 * kPi / period_;
    std::vector<double> a(a_.size(), 0.0), b(b_.size(), 0.0);
    for (std::size_t k = 1; k < a_.size(); ++k) {
        const double d = -(w * k) * (w * k);
        a[k] = a_[k] / d;
        b[k] = b_[k] / d;
    }
    return synthesize(a, b, n_);
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body) {
    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(threads, n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                const std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
                for (std::size_t i = lo; i < hi; ++i) body(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = std::min(x.size(), y.size());
    if (n < 2) throw InvalidArgument("loglog_slope needs at least two points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::vector<double> geometric_grid(double lo, double hi, int count) {
    if (count < 1 || !(lo > 0) || !(hi >= lo)) throw InvalidArgument("geometric_grid: bad range");
    std::vector<double> out(count);
    if (count == 1) {
        out[0] = lo;
        return out;
    }
    const double r = std::log(hi / lo) / (count - 1);
    for (int i = 0; i < count; ++i) out[i] = lo * std::exp(r * i);
    out.back() = hi;
    return out;
}

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace vmstab
