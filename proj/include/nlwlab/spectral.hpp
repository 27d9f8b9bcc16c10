#ifndef NLWLAB_SPECTRAL_HPP
#define NLWLAB_SPECTRAL_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace nlwlab {

// Dirichlet spectral domain on the interval (0, length): eigenfunctions
// e_j(x) = sqrt(2/L) sin(j pi x / L), eigenvalues lambda_j = (j pi / L)^2.
// The collocation grid has 2*n_modes+1 interior points so that pointwise
// products of the retained modes stay under control for cubic-type terms.
struct SpectralDomain {
    double length = 0.0;
    std::size_t n_modes = 0;
    std::vector<double> eigenvalues;  // ascending, lambda_1 > 0

    std::size_t grid_size() const { return 2 * n_modes + 1; }
    double lambda_min() const { return eigenvalues.front(); }
    double lambda_max() const { return eigenvalues.back(); }
};

inline SpectralDomain build_domain(double length, std::size_t n_modes) {
    if (!(length > 0.0))
        throw std::invalid_argument("build_domain: length must be positive");
    if (n_modes < 1)
        throw std::invalid_argument("build_domain: need at least one mode");
    SpectralDomain d;
    d.length = length;
    d.n_modes = n_modes;
    d.eigenvalues.resize(n_modes);
    const double pi = 3.14159265358979323846264338328;
    for (std::size_t j = 0; j < n_modes; ++j) {
        const double k = static_cast<double>(j + 1) * pi / length;
        d.eigenvalues[j] = k * k;
    }
    return d;
}

// Coefficient field u = sum_j coeffs[j] e_j.
struct Field {
    std::vector<double> coeffs;

    Field() = default;
    explicit Field(std::size_t n) : coeffs(n, 0.0) {}
    explicit Field(std::vector<double> c) : coeffs(std::move(c)) {}

    std::size_t size() const { return coeffs.size(); }
    double& operator[](std::size_t j) { return coeffs[j]; }
    double operator[](std::size_t j) const { return coeffs[j]; }
};

// Phase point [u, u_dot].
struct State {
    Field position;
    Field velocity;

    State() = default;
    explicit State(std::size_t n) : position(n), velocity(n) {}
    State(Field u, Field v) : position(std::move(u)), velocity(std::move(v)) {}

    std::size_t n_modes() const { return position.size(); }
};

inline State zero_state(const SpectralDomain& d) { return State(d.n_modes); }

// alpha is the small damping-adapted parameter entering the twisted phase-space
// norm; s is the extra smoothness exponent. The admissible range of s depends
// on the growth exponent of the active nonlinearity and is checked at
// configuration time, not here.
struct NormParams {
    double alpha = 0.0;
    double s = 0.0;
};

// Default alpha: small enough that the linear damped-wave flow contracts the
// twisted norm at rate alpha for every mode (see dynamics.hpp for the flow).
inline double default_alpha(double gamma, const SpectralDomain& d) {
    const double a = std::min(gamma, d.lambda_min() / gamma) / 4.0;
    return a;
}

inline void check_same_domain(const State& st, const SpectralDomain& d, const char* who) {
    if (st.position.size() != d.n_modes || st.velocity.size() != d.n_modes)
        throw std::invalid_argument(std::string(who) + ": state/domain mode count mismatch");
}

// |u|_H^2 = ||u1||_1^2 + ||u2 + alpha*u1||^2
inline double h_norm_sq(const State& st, const SpectralDomain& d, const NormParams& p) {
    check_same_domain(st, d, "h_norm_sq");
    double acc = 0.0;
    for (std::size_t j = 0; j < d.n_modes; ++j) {
        const double u = st.position[j];
        const double w = st.velocity[j] + p.alpha * u;
        acc += d.eigenvalues[j] * u * u + w * w;
    }
    return acc;
}

// |u|_{H^s}^2 = ||u1||_{s+1}^2 + ||u2 + alpha*u1||_s^2
inline double hs_norm_sq(const State& st, const SpectralDomain& d, const NormParams& p) {
    check_same_domain(st, d, "hs_norm_sq");
    double acc = 0.0;
    for (std::size_t j = 0; j < d.n_modes; ++j) {
        const double lam_s = std::pow(d.eigenvalues[j], p.s);
        const double u = st.position[j];
        const double w = st.velocity[j] + p.alpha * u;
        acc += lam_s * (d.eigenvalues[j] * u * u + w * w);
    }
    return acc;
}

// plain Sobolev pieces, used by flux conditions and oracles
inline double grad_norm_sq(const Field& f, const SpectralDomain& d) {
    double acc = 0.0;
    for (std::size_t j = 0; j < f.size(); ++j) acc += d.eigenvalues[j] * f[j] * f[j];
    return acc;
}

inline double l2_norm_sq(const Field& f) {
    double acc = 0.0;
    for (double c : f.coeffs) acc += c * c;
    return acc;
}

// zero every mode with index > N (1-based count of retained modes)
inline State project_modes(const State& st, std::size_t N) {
    if (N > st.n_modes())
        throw std::invalid_argument("project_modes: N exceeds mode count");
    State out = st;
    for (std::size_t j = N; j < st.n_modes(); ++j) {
        out.position[j] = 0.0;
        out.velocity[j] = 0.0;
    }
    return out;
}

inline State state_diff(const State& a, const State& b) {
    State out(a.n_modes());
    for (std::size_t j = 0; j < a.n_modes(); ++j) {
        out.position[j] = a.position[j] - b.position[j];
        out.velocity[j] = a.velocity[j] - b.velocity[j];
    }
    return out;
}

// Discrete sine transform pair on the interior grid x_k = k L/(M+1), k=1..M,
// M = grid_size(). Exact inverse of each other for any field (DST-I
// orthogonality), which is what makes the pseudo-spectral nonlinearity
// evaluation reproducible to roundoff.
class Collocation {
public:
    explicit Collocation(const SpectralDomain& d)
        : n_(d.n_modes), m_(d.grid_size()), length_(d.length) {
        const double pi = 3.14159265358979323846264338328;
        sines_.resize(n_ * m_);
        for (std::size_t j = 0; j < n_; ++j)
            for (std::size_t k = 0; k < m_; ++k)
                sines_[j * m_ + k] =
                    std::sin(pi * static_cast<double>((j + 1) * (k + 1)) /
                             static_cast<double>(m_ + 1));
        basis_scale_ = std::sqrt(2.0 / length_);
        inv_scale_ = std::sqrt(length_ / 2.0) * 2.0 / static_cast<double>(m_ + 1);
        dx_ = length_ / static_cast<double>(m_ + 1);
    }

    std::size_t grid_size() const { return m_; }
    double dx() const { return dx_; }

    // values of u at the interior collocation nodes
    std::vector<double> to_collocation(const Field& f) const {
        if (f.size() != n_)
            throw std::invalid_argument("to_collocation: field/grid mismatch");
        std::vector<double> vals(m_, 0.0);
        for (std::size_t j = 0; j < n_; ++j) {
            const double cj = f[j] * basis_scale_;
            if (cj == 0.0) continue;
            const double* row = &sines_[j * m_];
            for (std::size_t k = 0; k < m_; ++k) vals[k] += cj * row[k];
        }
        return vals;
    }

    Field from_collocation(const std::vector<double>& vals) const {
        if (vals.empty() || vals.size() != m_)
            throw std::invalid_argument("from_collocation: value/grid mismatch");
        Field f(n_);
        for (std::size_t j = 0; j < n_; ++j) {
            const double* row = &sines_[j * m_];
            double acc = 0.0;
            for (std::size_t k = 0; k < m_; ++k) acc += vals[k] * row[k];
            f[j] = acc * inv_scale_;
        }
        return f;
    }

    // trapezoid quadrature over (0, L); integrand must vanish at the boundary,
    // which holds for every F(u) with F(0)=0 under Dirichlet conditions
    double integrate(const std::vector<double>& vals) const {
        double acc = 0.0;
        for (double v : vals) acc += v;
        return acc * dx_;
    }

private:
    std::size_t n_;
    std::size_t m_;
    double length_;
    double basis_scale_;
    double inv_scale_;
    double dx_;
    std::vector<double> sines_;
};

}  // namespace nlwlab

#endif
