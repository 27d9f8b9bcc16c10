#ifndef NLWLAB_CONTROL_HPP
#define NLWLAB_CONTROL_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nlwlab/dynamics.hpp"
#include "nlwlab/stats.hpp"

namespace nlwlab {

struct SteadyStateError : std::runtime_error {
    std::vector<double> residual_history;
    explicit SteadyStateError(std::vector<double> hist)
        : std::runtime_error("steady state Newton did not converge; last residual " +
                             std::to_string(hist.empty() ? -1.0 : hist.back())),
          residual_history(std::move(hist)) {}
};

// Solve -Delta v + f(v) = h in the truncated space by damped Newton. The
// Jacobian diag(lambda) + f'(v) is assembled column-wise through the
// collocation transform.
inline Field solve_steady_state(const SpectralDomain& d, const Nonlinearity& nl, const Field& h,
                                double tol = 1e-11, int max_iter = 80) {
    if (h.size() != d.n_modes)
        throw std::invalid_argument("solve_steady_state: forcing/domain mismatch");
    Collocation colloc(d);
    const std::size_t n = d.n_modes;

    auto residual = [&](const Field& v) {
        Field r(n);
        Field fs(n);
        if (nl.kind != NonlinearityKind::zero) {
            std::vector<double> vals = colloc.to_collocation(v);
            for (double& x : vals) x = nl.f(x);
            fs = colloc.from_collocation(vals);
        }
        for (std::size_t j = 0; j < n; ++j) r[j] = d.eigenvalues[j] * v[j] + fs[j] - h[j];
        return r;
    };
    auto norm = [&](const Field& r) { return std::sqrt(l2_norm_sq(r)); };

    Field v(n);
    Field r = residual(v);
    std::vector<double> history{norm(r)};
    for (int it = 0; it < max_iter; ++it) {
        if (history.back() <= tol) return v;

        // Jacobian
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(static_cast<long>(n), static_cast<long>(n));
        std::vector<double> fp = colloc.to_collocation(v);
        for (double& x : fp) x = nl.f_prime(x);
        for (std::size_t c = 0; c < n; ++c) {
            Field e(n);
            e[c] = 1.0;
            std::vector<double> col = colloc.to_collocation(e);
            for (std::size_t k = 0; k < col.size(); ++k) col[k] *= fp[k];
            Field jc = colloc.from_collocation(col);
            for (std::size_t rix = 0; rix < n; ++rix)
                J(static_cast<long>(rix), static_cast<long>(c)) = jc[rix];
            J(static_cast<long>(c), static_cast<long>(c)) += d.eigenvalues[c];
        }
        Eigen::VectorXd rhs(static_cast<long>(n));
        for (std::size_t j = 0; j < n; ++j) rhs(static_cast<long>(j)) = -r[j];
        Eigen::VectorXd delta = J.partialPivLu().solve(rhs);

        // backtracking line search
        double step = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 30; ++ls) {
            Field trial = v;
            for (std::size_t j = 0; j < n; ++j)
                trial[j] += step * delta(static_cast<long>(j));
            Field rt = residual(trial);
            if (norm(rt) < (1.0 - 0.25 * step) * history.back()) {
                v = trial;
                r = rt;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            history.push_back(norm(r));
            throw SteadyStateError(std::move(history));
        }
        history.push_back(norm(r));
    }
    if (history.back() <= tol) return v;
    throw SteadyStateError(std::move(history));
}

// Deterministic RK4 for the controlled system
//   udotdot = -gamma udot + Delta u - f(u) + h + g(t),
// with g a spectral forcing supplied per time.
class DeterministicFlow {
public:
    using Forcing = std::function<void(double t, Field& g)>;

    DeterministicFlow(const SpectralDomain& d, Nonlinearity nl, double gamma, Field h)
        : d_(d), nl_(nl), gamma_(gamma), h_(std::move(h)), colloc_(d) {
        if (h_.size() == 0) h_ = Field(d_.n_modes);
    }

    const Collocation& collocation() const { return colloc_; }

    Field f_spectral(const Field& u) const {
        if (nl_.kind == NonlinearityKind::zero) return Field(u.size());
        std::vector<double> vals = colloc_.to_collocation(u);
        for (double& v : vals) v = nl_.f(v);
        return colloc_.from_collocation(vals);
    }

    // one RK4 step; `forcing` may be empty
    State step(const State& st, double t, double dt, const Forcing& forcing) const {
        auto rhs = [&](const State& s, double tau) {
            State out(d_.n_modes);
            Field fs = f_spectral(s.position);
            Field g(d_.n_modes);
            if (forcing) forcing(tau, g);
            for (std::size_t j = 0; j < d_.n_modes; ++j) {
                out.position[j] = s.velocity[j];
                out.velocity[j] = -gamma_ * s.velocity[j] - d_.eigenvalues[j] * s.position[j] -
                                  fs[j] + h_[j] + g[j];
            }
            return out;
        };
        const State k1 = rhs(st, t);
        const State k2 = rhs(axpy(st, k1, 0.5 * dt), t + 0.5 * dt);
        const State k3 = rhs(axpy(st, k2, 0.5 * dt), t + 0.5 * dt);
        const State k4 = rhs(axpy(st, k3, dt), t + dt);
        State out = st;
        for (std::size_t j = 0; j < d_.n_modes; ++j) {
            out.position[j] += dt / 6.0 *
                               (k1.position[j] + 2.0 * k2.position[j] + 2.0 * k3.position[j] +
                                k4.position[j]);
            out.velocity[j] += dt / 6.0 *
                               (k1.velocity[j] + 2.0 * k2.velocity[j] + 2.0 * k3.velocity[j] +
                                k4.velocity[j]);
        }
        return out;
    }

private:
    static State axpy(const State& s, const State& ds, double c) {
        State out = s;
        for (std::size_t j = 0; j < s.n_modes(); ++j) {
            out.position[j] += c * ds.position[j];
            out.velocity[j] += c * ds.velocity[j];
        }
        return out;
    }

    SpectralDomain d_;
    Nonlinearity nl_;
    double gamma_;
    Field h_;
    Collocation colloc_;
};

// Smooth blend u(t) = a(t) vhat + b(t) target_pos + c(t) target_vel with the
// endpoint data a(0)=1, a(1)=adot(0)=adot(1)=0; b(1)=1, b(0)=bdot(0)=bdot(1)=0;
// cdot(1)=1, c(0)=c(1)=cdot(0)=0, realised by cubic/quartic polynomials.
struct BlendFunctions {
    static double a(double t) { return 1.0 - 3.0 * t * t + 2.0 * t * t * t; }
    static double da(double t) { return -6.0 * t + 6.0 * t * t; }
    static double dda(double t) { return -6.0 + 12.0 * t; }
    static double b(double t) { return 3.0 * t * t - 2.0 * t * t * t; }
    static double db(double t) { return 6.0 * t - 6.0 * t * t; }
    static double ddb(double t) { return 6.0 - 12.0 * t; }
    static double c(double t) { return t * t * (t - 1.0); }
    static double dc(double t) { return 3.0 * t * t - 2.0 * t; }
    static double ddc(double t) { return 6.0 * t - 2.0; }
};

// The open-loop control of the exact-controllability construction: along the
// blend trajectory, phi_dot(t) = u'' + gamma u' - Delta u + f(u) - h, so the
// controlled dynamics driven by h + phi_dot reproduces the blend exactly.
class ControlPath {
public:
    ControlPath(const SpectralDomain& d, const Nonlinearity& nl, double gamma, Field h,
                Field vhat, State target)
        : d_(d), nl_(nl), gamma_(gamma), h_(std::move(h)), vhat_(std::move(vhat)),
          target_(std::move(target)), colloc_(d) {
        if (h_.size() == 0) h_ = Field(d_.n_modes);
    }

    State blend(double t) const {
        State out(d_.n_modes);
        for (std::size_t j = 0; j < d_.n_modes; ++j) {
            out.position[j] = BlendFunctions::a(t) * vhat_[j] +
                              BlendFunctions::b(t) * target_.position[j] +
                              BlendFunctions::c(t) * target_.velocity[j];
            out.velocity[j] = BlendFunctions::da(t) * vhat_[j] +
                              BlendFunctions::db(t) * target_.position[j] +
                              BlendFunctions::dc(t) * target_.velocity[j];
        }
        return out;
    }

    void phi_dot(double t, Field& g) const {
        State u = blend(t);
        Field fs(d_.n_modes);
        if (nl_.kind != NonlinearityKind::zero) {
            std::vector<double> vals = colloc_.to_collocation(u.position);
            for (double& v : vals) v = nl_.f(v);
            fs = colloc_.from_collocation(vals);
        }
        for (std::size_t j = 0; j < d_.n_modes; ++j) {
            const double udd = BlendFunctions::dda(t) * vhat_[j] +
                               BlendFunctions::ddb(t) * target_.position[j] +
                               BlendFunctions::ddc(t) * target_.velocity[j];
            g[j] = udd + gamma_ * u.velocity[j] + d_.eigenvalues[j] * u.position[j] + fs[j] -
                   h_[j];
        }
    }

    const State& target() const { return target_; }
    State start() const { return State(vhat_, Field(d_.n_modes)); }

private:
    SpectralDomain d_;
    Nonlinearity nl_;
    double gamma_;
    Field h_;
    Field vhat_;
    State target_;
    Collocation colloc_;
};

struct ControlReport {
    State endpoint;
    double endpoint_error_sq = 0.0;  // |endpoint - target|_H^2
};

inline ControlPath control_to_target(const SpectralDomain& d, const Nonlinearity& nl,
                                     double gamma, const Field& h, const Field& vhat,
                                     const State& target) {
    return ControlPath(d, nl, gamma, h, vhat, target);
}

// Replays the controlled dynamics from [vhat, 0] over t in [0,1].
inline ControlReport replay_control(const ControlPath& path, const SpectralDomain& d,
                                    const Nonlinearity& nl, double gamma, const Field& h,
                                    const NormParams& p, double dt = 1e-3) {
    DeterministicFlow flow(d, nl, gamma, h);
    DeterministicFlow::Forcing forcing = [&](double t, Field& g) { path.phi_dot(t, g); };
    State st = path.start();
    const std::size_t n = step_count(1.0, dt);
    for (std::size_t k = 0; k < n; ++k)
        st = flow.step(st, static_cast<double>(k) * dt, dt, forcing);
    ControlReport rep;
    rep.endpoint_error_sq = h_norm_sq(state_diff(st, path.target()), d, p);
    rep.endpoint = std::move(st);
    return rep;
}

struct StabilizeReport {
    std::size_t coupling_level = 0;
    std::vector<double> times;
    std::vector<double> diff_sq;   // |vtilde(t) - vhat_state|_H^2
    std::vector<double> bound_sq;  // exp(-alpha t) |v0 - vhat_state|_H^2
    bool bound_ok = false;
    double rate_hat = 0.0;  // fitted decay rate of diff_sq
};

// Feedback stabilisation: simulate the controlled equation
//   vtilde'' + gamma vtilde' - Delta vtilde + f(vtilde) = h + P_N[f(vtilde) - f(vhat)]
// deterministically and compare against the exp(-alpha t) envelope.
inline StabilizeReport feedback_stabilize(const SpectralDomain& d, const Nonlinearity& nl,
                                          double gamma, const Field& h, const State& start,
                                          const Field& vhat, std::size_t N, double horizon,
                                          const NormParams& p, double dt = 1e-3,
                                          std::size_t n_samples = 64) {
    if (N > d.n_modes)
        throw std::invalid_argument("feedback_stabilize: N exceeds mode count");
    DeterministicFlow flow(d, nl, gamma, h);
    const Field f_vhat = flow.f_spectral(vhat);
    const State vhat_state(vhat, Field(d.n_modes));

    StabilizeReport rep;
    rep.coupling_level = N;
    const double base = h_norm_sq(state_diff(start, vhat_state), d, p);
    const std::size_t n_steps = step_count(horizon, dt);
    const std::size_t stride = std::max<std::size_t>(1, n_steps / n_samples);

    // the feedback P_N[f(vtilde) - f(vhat)] depends on the running state, so
    // it is part of the rhs rather than an external forcing
    State st = start;
    auto record = [&](std::size_t step) {
        rep.times.push_back(static_cast<double>(step) * dt);
        rep.diff_sq.push_back(h_norm_sq(state_diff(st, vhat_state), d, p));
        rep.bound_sq.push_back(std::exp(-p.alpha * rep.times.back()) * base);
    };
    auto rhs = [&](const State& s) {
        State out(d.n_modes);
        Field fs = flow.f_spectral(s.position);
        for (std::size_t j = 0; j < d.n_modes; ++j) {
            const double feedback = j < N ? fs[j] - f_vhat[j] : 0.0;
            out.position[j] = s.velocity[j];
            out.velocity[j] = -gamma * s.velocity[j] - d.eigenvalues[j] * s.position[j] - fs[j] +
                              h[j] + feedback;
        }
        return out;
    };
    auto rk4 = [&](const State& s) {
        auto axpy = [](const State& x, const State& dx, double c) {
            State out = x;
            for (std::size_t j = 0; j < x.n_modes(); ++j) {
                out.position[j] += c * dx.position[j];
                out.velocity[j] += c * dx.velocity[j];
            }
            return out;
        };
        const State k1 = rhs(s);
        const State k2 = rhs(axpy(s, k1, 0.5 * dt));
        const State k3 = rhs(axpy(s, k2, 0.5 * dt));
        const State k4 = rhs(axpy(s, k3, dt));
        State out = s;
        for (std::size_t j = 0; j < d.n_modes; ++j) {
            out.position[j] += dt / 6.0 * (k1.position[j] + 2.0 * k2.position[j] +
                                           2.0 * k3.position[j] + k4.position[j]);
            out.velocity[j] += dt / 6.0 * (k1.velocity[j] + 2.0 * k2.velocity[j] +
                                           2.0 * k3.velocity[j] + k4.velocity[j]);
        }
        return out;
    };

    record(0);
    for (std::size_t step = 1; step <= n_steps; ++step) {
        st = rk4(st);
        for (std::size_t j = 0; j < d.n_modes; ++j)
            if (!std::isfinite(st.position[j])) throw DivergenceError(j);
        if (step % stride == 0) record(step);
    }

    rep.bound_ok = true;
    for (std::size_t k = 0; k < rep.times.size(); ++k)
        if (rep.diff_sq[k] > rep.bound_sq[k] * (1.0 + 1e-8) + 1e-300) rep.bound_ok = false;

    std::vector<double> tx, ly;
    for (std::size_t k = 0; k < rep.times.size(); ++k)
        if (rep.diff_sq[k] > 1e-250 * base && base > 0.0) {
            tx.push_back(rep.times[k]);
            ly.push_back(std::log(rep.diff_sq[k]));
        }
    if (tx.size() >= 3) {
        const LineFit fit = fit_line(tx, ly);
        if (fit.ok) rep.rate_hat = -fit.slope;
    }
    return rep;
}

}  // namespace nlwlab

#endif
