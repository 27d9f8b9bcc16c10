#ifndef NLWLAB_DYNAMICS_HPP
#define NLWLAB_DYNAMICS_HPP

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nlwlab/noise.hpp"
#include "nlwlab/nonlinearity.hpp"
#include "nlwlab/rng.hpp"
#include "nlwlab/spectral.hpp"

namespace nlwlab {

struct SimParams {
    double gamma = 0.5;  // damping
    Field h;             // deterministic forcing, spectral coefficients
    double dt = 0.01;
    double t_final = 1.0;
};

struct DivergenceError : std::runtime_error {
    std::size_t mode;
    explicit DivergenceError(std::size_t j)
        : std::runtime_error("trajectory diverged (non-finite value) at mode " +
                             std::to_string(j + 1)),
          mode(j) {}
};

// Exact flow data of one damped-oscillator mode over a fixed time step:
//   d[u,v] = (A[u,v] + [0,h]) dt + [0,b] dW,  A = [[0,1],[-lambda,-gamma]].
// phi is exp(A tau); (cl, cl12, cl22) is the lower Cholesky factor of the
// Ito covariance Q(tau) = Pinf - phi Pinf phi^T with the stationary
// Pinf = b^2/(2 gamma) diag(1/lambda, 1).
struct ModeFlow {
    double phi11, phi12, phi21, phi22;
    double l11, l21, l22;  // Cholesky of Q(tau)
    double ubar;           // fixed point h/lambda (velocity fixed point is 0)
};

inline ModeFlow make_mode_flow(double lambda, double gamma, double b, double h, double tau) {
    ModeFlow m{};
    const double half_g = 0.5 * gamma;
    const double disc = lambda - half_g * half_g;  // omega^2 (underdamped if > 0)
    double c, s;
    if (disc * tau * tau > 1e-12) {
        const double w = std::sqrt(disc);
        c = std::cos(w * tau);
        s = std::sin(w * tau) / w;
    } else if (disc * tau * tau < -1e-12) {
        const double k = std::sqrt(-disc);
        c = std::cosh(k * tau);
        s = std::sinh(k * tau) / k;
    } else {
        const double z = disc * tau * tau;
        c = 1.0 - 0.5 * z;
        s = tau * (1.0 - z / 6.0);
    }
    const double decay = std::exp(-half_g * tau);
    m.phi11 = decay * (c + s * half_g);
    m.phi12 = decay * s;
    m.phi21 = decay * (-lambda * s);
    m.phi22 = decay * (c - s * half_g);
    m.ubar = h / lambda;

    if (b > 0.0) {
        const double p1 = b * b / (2.0 * gamma * lambda);
        const double p2 = b * b / (2.0 * gamma);
        const double q11 = p1 - (m.phi11 * m.phi11 * p1 + m.phi12 * m.phi12 * p2);
        const double q12 = -(m.phi11 * m.phi21 * p1 + m.phi12 * m.phi22 * p2);
        const double q22 = p2 - (m.phi21 * m.phi21 * p1 + m.phi22 * m.phi22 * p2);
        m.l11 = std::sqrt(std::max(q11, 0.0));
        m.l21 = m.l11 > 0.0 ? q12 / m.l11 : 0.0;
        m.l22 = std::sqrt(std::max(q22 - m.l21 * m.l21, 0.0));
    }
    return m;
}

// Strang stepper: exact affine+stochastic half-step, full nonlinear kick
// evaluated pseudo-spectrally, exact half-step again. With f = 0 the scheme
// samples the exact Gaussian transition for any dt.
class Stepper {
public:
    Stepper(const SpectralDomain& domain, Nonlinearity nl, NoiseSpec ns, SimParams sp)
        : domain_(domain),
          nl_(nl),
          ns_(std::move(ns)),
          sp_(std::move(sp)),
          colloc_(domain) {
        if (!(sp_.gamma > 0.0)) throw std::invalid_argument("Stepper: gamma must be positive");
        if (!(sp_.dt > 0.0)) throw std::invalid_argument("Stepper: dt must be positive");
        if (ns_.b.size() != domain_.n_modes)
            throw std::invalid_argument("Stepper: noise/domain mismatch");
        if (sp_.h.size() == 0) sp_.h = Field(domain_.n_modes);
        if (sp_.h.size() != domain_.n_modes)
            throw std::invalid_argument("Stepper: forcing/domain mismatch");
        half_.reserve(domain_.n_modes);
        for (std::size_t j = 0; j < domain_.n_modes; ++j)
            half_.push_back(make_mode_flow(domain_.eigenvalues[j], sp_.gamma, ns_.b[j],
                                           sp_.h[j], 0.5 * sp_.dt));
        has_noise_ = false;
        for (double b : ns_.b)
            if (b > 0.0) has_noise_ = true;
    }

    const SpectralDomain& domain() const { return domain_; }
    const Nonlinearity& nonlinearity() const { return nl_; }
    const NoiseSpec& noise() const { return ns_; }
    const SimParams& params() const { return sp_; }
    const Collocation& collocation() const { return colloc_; }
    const std::vector<ModeFlow>& half_flows() const { return half_; }
    bool has_noise() const { return has_noise_; }

    // spectral coefficients of f(u), via collocation
    Field f_spectral(const Field& u) const {
        if (nl_.kind == NonlinearityKind::zero) return Field(u.size());
        std::vector<double> vals = colloc_.to_collocation(u);
        for (double& v : vals) v = nl_.f(v);
        return colloc_.from_collocation(vals);
    }

    void half_step_linear(State& st, RngStream& rng) const {
        for (std::size_t j = 0; j < domain_.n_modes; ++j) {
            const ModeFlow& m = half_[j];
            const double du = st.position[j] - m.ubar;
            const double v = st.velocity[j];
            double nu = m.ubar + m.phi11 * du + m.phi12 * v;
            double nv = m.phi21 * du + m.phi22 * v;
            if (has_noise_) {
                const double g1 = rng.next_gaussian();
                const double g2 = rng.next_gaussian();
                nu += m.l11 * g1;
                nv += m.l21 * g1 + m.l22 * g2;
            }
            st.position[j] = nu;
            st.velocity[j] = nv;
        }
    }

    void kick(State& st) const {
        if (nl_.kind == NonlinearityKind::zero) return;
        const Field fs = f_spectral(st.position);
        for (std::size_t j = 0; j < domain_.n_modes; ++j)
            st.velocity[j] -= sp_.dt * fs[j];
    }

    void check_finite(const State& st) const {
        for (std::size_t j = 0; j < domain_.n_modes; ++j)
            if (!std::isfinite(st.position[j]) || !std::isfinite(st.velocity[j]))
                throw DivergenceError(j);
    }

    State step(const State& in, RngStream& rng) const {
        State st = in;
        half_step_linear(st, rng);
        kick(st);
        half_step_linear(st, rng);
        check_finite(st);
        return st;
    }

private:
    SpectralDomain domain_;
    Nonlinearity nl_;
    NoiseSpec ns_;
    SimParams sp_;
    Collocation colloc_;
    std::vector<ModeFlow> half_;
    bool has_noise_ = false;
};

// ---- energy and weight functionals ----

// E(u) = |u|_H^2 + 2 int F(u1) dx
inline double energy(const State& st, const SpectralDomain& d, const Nonlinearity& nl,
                     const NormParams& p, const Collocation& colloc) {
    double e = h_norm_sq(st, d, p);
    if (nl.kind != NonlinearityKind::zero) {
        std::vector<double> vals = colloc.to_collocation(st.position);
        for (double& v : vals) v = nl.F(v);
        e += 2.0 * colloc.integrate(vals);
    }
    return e;
}

inline double energy(const State& st, const SpectralDomain& d, const Nonlinearity& nl,
                     const NormParams& p) {
    Collocation colloc(d);
    return energy(st, d, nl, p, colloc);
}

struct EnergyReport {
    double energy = 0.0;
    double weight_w = 1.0;     // 1 + |u|_{H^s}^2 + E^4
    double weight_w_m = 1.0;   // 1 + |u|_{H^s}^{2m} + E^{4m}
    double weight_wt_m = 2.0;  // w_m + exp(kappa E)
    double exp_arg = 0.0;      // kappa * E, kept so overflow is attributable
    bool saturated = false;
};

inline double default_kappa(const NoiseSpec& ns, const NormParams& p) {
    return ns.B / (2.0 * p.alpha);
}

inline EnergyReport weights(const State& st, const SpectralDomain& d, const Nonlinearity& nl,
                            const NormParams& p, const Collocation& colloc, unsigned m,
                            double kappa) {
    if (m < 1) throw std::invalid_argument("weights: m must be >= 1");
    EnergyReport r;
    r.energy = energy(st, d, nl, p, colloc);
    const double hs = hs_norm_sq(st, d, p);
    const double e4 = std::pow(r.energy, 4.0);
    r.weight_w = 1.0 + hs + e4;
    r.weight_w_m = 1.0 + std::pow(hs, static_cast<double>(m)) +
                   std::pow(e4, static_cast<double>(m));
    r.exp_arg = kappa * r.energy;
    if (r.exp_arg > 700.0) {
        r.saturated = true;
        r.weight_wt_m = r.weight_w_m;  // exponential part reported via exp_arg
    } else {
        r.weight_wt_m = r.weight_w_m + std::exp(r.exp_arg);
    }
    return r;
}

// ---- trajectory driver ----

struct TrajectoryRecord {
    State final_state;
    std::size_t n_steps = 0;
    double t_final = 0.0;
    double min_energy = 0.0;
    double max_energy = 0.0;
};

// called every `stride` steps, including step 0 (the initial state)
struct Observer {
    std::size_t stride = 1;
    std::function<void(std::size_t step, double t, const State&)> fn;
};

inline std::size_t step_count(double t_final, double dt) {
    if (t_final <= 0.0) return 0;
    return static_cast<std::size_t>(std::llround(t_final / dt));
}

inline TrajectoryRecord simulate(const Stepper& stepper, const State& initial, RngStream& rng,
                                 std::vector<Observer> observers = {}) {
    const SimParams& sp = stepper.params();
    NormParams p{default_alpha(sp.gamma, stepper.domain()), 0.0};
    const std::size_t n = step_count(sp.t_final, sp.dt);

    TrajectoryRecord rec;
    State st = initial;
    double e = energy(st, stepper.domain(), stepper.nonlinearity(), p, stepper.collocation());
    rec.min_energy = rec.max_energy = e;
    for (const Observer& ob : observers)
        if (ob.fn) ob.fn(0, 0.0, st);
    for (std::size_t k = 1; k <= n; ++k) {
        st = stepper.step(st, rng);
        e = energy(st, stepper.domain(), stepper.nonlinearity(), p, stepper.collocation());
        rec.min_energy = std::min(rec.min_energy, e);
        rec.max_energy = std::max(rec.max_energy, e);
        for (const Observer& ob : observers)
            if (ob.fn && (k % (ob.stride == 0 ? 1 : ob.stride)) == 0)
                ob.fn(k, static_cast<double>(k) * sp.dt, st);
    }
    rec.final_state = std::move(st);
    rec.n_steps = n;
    rec.t_final = static_cast<double>(n) * sp.dt;
    return rec;
}

}  // namespace nlwlab

#endif
