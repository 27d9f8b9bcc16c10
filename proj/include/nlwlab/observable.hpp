#ifndef NLWLAB_OBSERVABLE_HPP
#define NLWLAB_OBSERVABLE_HPP

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "nlwlab/dynamics.hpp"
#include "nlwlab/rng.hpp"
#include "nlwlab/spectral.hpp"

namespace nlwlab {

// Bounded Holder function of finitely many low modes: psi(u) = F(P_N u).
// sup_norm bounds |F|; (holder_q, holder_const) is the declared modulus
// |F(x)-F(y)| <= holder_const |x-y|^holder_q on the low-mode coordinates.
struct Observable {
    std::string name;
    std::size_t n_low_modes = 1;
    std::function<double(const State&)> fn;
    double sup_norm = 1.0;
    double holder_q = 1.0;
    double holder_const = 1.0;
    double oscillation = 2.0;  // sup - inf, analytic when known

    double operator()(const State& st) const { return fn(st); }
};

// constant observable: psi == c
inline Observable make_constant_observable(double c) {
    Observable o;
    o.name = "const_" + std::to_string(c);
    o.n_low_modes = 0;
    o.fn = [c](const State&) { return c; };
    o.sup_norm = std::fabs(c);
    o.holder_const = 0.0;
    o.oscillation = 0.0;
    return o;
}

// amp * tanh(scale * xi_j), xi_j = sqrt(lambda_j) u_j the natural H-coordinate
inline Observable make_tanh_mode_observable(const SpectralDomain& d, std::size_t mode_1based,
                                            double amp = 1.0, double scale = 1.0) {
    if (mode_1based < 1 || mode_1based > d.n_modes)
        throw std::invalid_argument("tanh observable: mode index out of range");
    Observable o;
    o.name = "tanh_mode_" + std::to_string(mode_1based);
    o.n_low_modes = mode_1based;
    const std::size_t j = mode_1based - 1;
    const double sq = std::sqrt(d.eigenvalues[j]);
    o.fn = [j, sq, amp, scale](const State& st) {
        return amp * std::tanh(scale * sq * st.position[j]);
    };
    o.sup_norm = std::fabs(amp);
    o.holder_q = 1.0;
    o.holder_const = std::fabs(amp) * std::fabs(scale);
    o.oscillation = 2.0 * std::fabs(amp);
    return o;
}

// amp * sin(scale * xi_j): bounded, smooth, non-monotone in the coordinate
inline Observable make_sin_mode_observable(const SpectralDomain& d, std::size_t mode_1based,
                                           double amp = 1.0, double scale = 1.0) {
    if (mode_1based < 1 || mode_1based > d.n_modes)
        throw std::invalid_argument("sin observable: mode index out of range");
    Observable o;
    o.name = "sin_mode_" + std::to_string(mode_1based);
    o.n_low_modes = mode_1based;
    const std::size_t j = mode_1based - 1;
    const double sq = std::sqrt(d.eigenvalues[j]);
    o.fn = [j, sq, amp, scale](const State& st) {
        return amp * std::sin(scale * sq * st.position[j]);
    };
    o.sup_norm = std::fabs(amp);
    o.holder_q = 1.0;
    o.holder_const = std::fabs(amp) * std::fabs(scale);
    o.oscillation = 2.0 * std::fabs(amp);
    return o;
}

// amp * (u_j^2 truncated at cap), for the quadratic-observable oracle checks
inline Observable make_truncated_quadratic_observable(const SpectralDomain& d,
                                                      std::size_t mode_1based, double cap,
                                                      double amp = 1.0) {
    if (mode_1based < 1 || mode_1based > d.n_modes)
        throw std::invalid_argument("quadratic observable: mode index out of range");
    Observable o;
    o.name = "quad_mode_" + std::to_string(mode_1based);
    o.n_low_modes = mode_1based;
    const std::size_t j = mode_1based - 1;
    o.fn = [j, cap, amp](const State& st) {
        const double q = st.position[j] * st.position[j];
        return amp * std::min(q, cap);
    };
    o.sup_norm = std::fabs(amp) * cap;
    o.holder_q = 1.0;
    // |d(u^2 ^ cap)| <= 2 sqrt(cap)|du|, and |du_j| <= dist / sqrt(lambda_j)
    o.holder_const = 2.0 * std::fabs(amp) * std::sqrt(cap / d.eigenvalues[j]);
    o.oscillation = std::fabs(amp) * cap;
    return o;
}

// velocity-coordinate variant, w_j = udot_j + alpha u_j
inline Observable make_tanh_velocity_observable(const SpectralDomain& d,
                                                const NormParams& p, std::size_t mode_1based,
                                                double amp = 1.0, double scale = 1.0) {
    if (mode_1based < 1 || mode_1based > d.n_modes)
        throw std::invalid_argument("tanh velocity observable: mode index out of range");
    Observable o;
    o.name = "tanh_vel_" + std::to_string(mode_1based);
    o.n_low_modes = mode_1based;
    const std::size_t j = mode_1based - 1;
    const double alpha = p.alpha;
    o.fn = [j, alpha, amp, scale](const State& st) {
        return amp * std::tanh(scale * (st.velocity[j] + alpha * st.position[j]));
    };
    o.sup_norm = std::fabs(amp);
    o.holder_q = 1.0;
    // |dw_j|^2 <= (1 + alpha^2/lambda_j)(dv^2 + lambda_j du^2)
    o.holder_const = std::fabs(amp) * std::fabs(scale) *
                     std::sqrt(1.0 + alpha * alpha / d.eigenvalues[j]);
    o.oscillation = 2.0 * std::fabs(amp);
    return o;
}

struct ObservableValidation {
    double max_abs = 0.0;
    double worst_holder_ratio = 0.0;  // |dF| / (holder_const |dx|^q)
    bool bounded_ok = false;
    bool holder_ok = false;
};

// Empirical check of the declared bounds on random state pairs.
inline ObservableValidation validate_observable(const Observable& o, const SpectralDomain& d,
                                                RngStream& rng, std::size_t n_samples = 2000,
                                                double amplitude = 3.0) {
    ObservableValidation v;
    State a(d.n_modes), b(d.n_modes);
    for (std::size_t i = 0; i < n_samples; ++i) {
        for (std::size_t j = 0; j < d.n_modes; ++j) {
            a.position[j] = amplitude * rng.next_gaussian();
            a.velocity[j] = amplitude * rng.next_gaussian();
            b.position[j] = a.position[j] + 0.3 * rng.next_gaussian();
            b.velocity[j] = a.velocity[j] + 0.3 * rng.next_gaussian();
        }
        const double fa = o(a), fb = o(b);
        v.max_abs = std::max({v.max_abs, std::fabs(fa), std::fabs(fb)});
        if (o.holder_const > 0.0) {
            double dist_sq = 0.0;
            for (std::size_t j = 0; j < o.n_low_modes && j < d.n_modes; ++j) {
                const double du = a.position[j] - b.position[j];
                const double dv = a.velocity[j] - b.velocity[j];
                dist_sq += d.eigenvalues[j] * du * du + dv * dv;
            }
            const double dist = std::sqrt(dist_sq);
            if (dist > 1e-12)
                v.worst_holder_ratio =
                    std::max(v.worst_holder_ratio,
                             std::fabs(fa - fb) / (o.holder_const * std::pow(dist, o.holder_q)));
        }
    }
    v.bounded_ok = v.max_abs <= o.sup_norm * (1.0 + 1e-9);
    v.holder_ok = v.worst_holder_ratio <= 1.0 + 1e-9;
    return v;
}

}  // namespace nlwlab

#endif
