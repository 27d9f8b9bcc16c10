#ifndef NLWLAB_COUPLING_HPP
#define NLWLAB_COUPLING_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "nlwlab/dynamics.hpp"
#include "nlwlab/parallel.hpp"
#include "nlwlab/stats.hpp"

namespace nlwlab {

// Two trajectories driven by one noise realisation: the primary follows the
// plain dynamics, the secondary follows the modified equation with the
// low-mode drift P_N(f(u) - f(v)) added, so their first N modes differ by a
// solution of the free linear damped wave equation.
struct CoupledPair {
    State primary;    // u
    State secondary;  // v
    std::size_t coupling_level = 0;
    uint64_t stream_id = 0;
};

inline double girsanov_rate(const Field& fu, const Field& fv, const NoiseSpec& ns,
                            std::size_t N) {
    double acc = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
        if (!(ns.b[j] > 0.0))
            throw std::invalid_argument("girsanov: degenerate noise direction inside P_N");
        const double drift = (fu[j] - fv[j]) / ns.b[j];
        acc += drift * drift;
    }
    return acc;
}

// One Strang step of the pair under shared noise. Returns the Girsanov-cost
// increment (midpoint quadrature of |diag(b)^{-1} P_N(f(u)-f(v))|^2 dt).
inline double step_intermediate(CoupledPair& pair, const Stepper& stepper, RngStream& rng) {
    const SpectralDomain& d = stepper.domain();
    const std::size_t N = pair.coupling_level;
    if (N > d.n_modes)
        throw std::invalid_argument("step_intermediate: coupling level exceeds mode count");
    const std::vector<ModeFlow>& flows = stepper.half_flows();
    const bool noisy = stepper.has_noise();
    const double dt = stepper.params().dt;

    auto shared_half_step = [&](State& a, State& b) {
        for (std::size_t j = 0; j < d.n_modes; ++j) {
            const ModeFlow& m = flows[j];
            double g1 = 0.0, g2 = 0.0;
            if (noisy) {
                g1 = rng.next_gaussian();
                g2 = rng.next_gaussian();
            }
            const double na = m.l11 * g1;
            const double nb = m.l21 * g1 + m.l22 * g2;
            {
                const double du = a.position[j] - m.ubar;
                const double v = a.velocity[j];
                a.position[j] = m.ubar + m.phi11 * du + m.phi12 * v + na;
                a.velocity[j] = m.phi21 * du + m.phi22 * v + nb;
            }
            {
                const double du = b.position[j] - m.ubar;
                const double v = b.velocity[j];
                b.position[j] = m.ubar + m.phi11 * du + m.phi12 * v + na;
                b.velocity[j] = m.phi21 * du + m.phi22 * v + nb;
            }
        }
    };

    shared_half_step(pair.primary, pair.secondary);

    double cost_increment = 0.0;
    if (stepper.nonlinearity().kind != NonlinearityKind::zero) {
        const Field fu = stepper.f_spectral(pair.primary.position);
        const Field fv = stepper.f_spectral(pair.secondary.position);
        cost_increment = girsanov_rate(fu, fv, stepper.noise(), N) * dt;
        for (std::size_t j = 0; j < d.n_modes; ++j) {
            pair.primary.velocity[j] -= dt * fu[j];
            // drift P_N(f(u)-f(v)) cancels f(v) on the first N modes
            pair.secondary.velocity[j] -= dt * (j < N ? fu[j] : fv[j]);
        }
    }

    shared_half_step(pair.primary, pair.secondary);
    stepper.check_finite(pair.primary);
    stepper.check_finite(pair.secondary);
    return cost_increment;
}

// Path record of a coupled run, sampled every `stride` steps.
struct CoupledTrace {
    std::size_t coupling_level = 0;
    std::vector<double> times;
    std::vector<double> proj_diff_sq;  // |P_N(v - u)|_H^2
    std::vector<double> full_diff_sq;  // |v - u|_H^2
    std::vector<double> flux_u;        // int_0^t ||grad u||^2
    std::vector<double> flux_v;
    std::vector<double> girsanov_cost;  // running int |diag(b)^{-1} P_N(f(u)-f(v))|^2
    CoupledPair final;
};

inline CoupledTrace run_coupled(const Stepper& stepper, const NormParams& p, CoupledPair pair,
                                std::size_t n_steps, std::size_t stride, RngStream& rng) {
    stride = std::max<std::size_t>(1, stride);
    const SpectralDomain& d = stepper.domain();
    const double dt = stepper.params().dt;
    CoupledTrace tr;
    tr.coupling_level = pair.coupling_level;

    double cost = 0.0, flux_u = 0.0, flux_v = 0.0;
    double prev_gu = grad_norm_sq(pair.primary.position, d);
    double prev_gv = grad_norm_sq(pair.secondary.position, d);
    auto record = [&](std::size_t step) {
        const State diff = state_diff(pair.secondary, pair.primary);
        tr.times.push_back(static_cast<double>(step) * dt);
        tr.proj_diff_sq.push_back(h_norm_sq(project_modes(diff, pair.coupling_level), d, p));
        tr.full_diff_sq.push_back(h_norm_sq(diff, d, p));
        tr.flux_u.push_back(flux_u);
        tr.flux_v.push_back(flux_v);
        tr.girsanov_cost.push_back(cost);
    };
    record(0);
    for (std::size_t step = 1; step <= n_steps; ++step) {
        cost += step_intermediate(pair, stepper, rng);
        const double gu = grad_norm_sq(pair.primary.position, d);
        const double gv = grad_norm_sq(pair.secondary.position, d);
        flux_u += 0.5 * (prev_gu + gu) * dt;
        flux_v += 0.5 * (prev_gv + gv) * dt;
        prev_gu = gu;
        prev_gv = gv;
        if (step % stride == 0) record(step);
    }
    tr.final = pair;
    return tr;
}

struct ProjectedCheckReport {
    double worst_ratio = 0.0;
    double worst_s = 0.0;
    double worst_t = 0.0;
    bool pass = false;
};

// Pathwise Foias-Prodi estimate for the projected difference: for every pair
// of sample times s <= t,
//   |P_N(v_t - u_t)|_H^2 <= exp(-alpha (t-s)) |v_s - u_s|_H^2
// up to the stated tolerance.
inline ProjectedCheckReport foias_prodi_projected_check(const CoupledTrace& tr, double alpha,
                                                        double tolerance = 1e-8) {
    ProjectedCheckReport rep;
    const std::size_t K = tr.times.size();
    for (std::size_t si = 0; si < K; ++si) {
        const double rhs_base = tr.full_diff_sq[si];
        for (std::size_t ti = si; ti < K; ++ti) {
            const double bound =
                std::exp(-alpha * (tr.times[ti] - tr.times[si])) * rhs_base;
            double ratio;
            if (bound > 0.0) {
                ratio = tr.proj_diff_sq[ti] / bound;
            } else {
                ratio = tr.proj_diff_sq[ti] == 0.0 ? 0.0 : 1e300;
            }
            if (ratio > rep.worst_ratio) {
                rep.worst_ratio = ratio;
                rep.worst_s = tr.times[si];
                rep.worst_t = tr.times[ti];
            }
        }
    }
    rep.pass = rep.worst_ratio <= 1.0 + tolerance;
    return rep;
}

struct FullCheckResult {
    std::size_t coupling_level = 0;
    std::size_t n_paths = 0;
    std::size_t n_qualifying = 0;  // paths satisfying the flux condition (4.17 shape)
    std::size_t n_holding = 0;     // qualifying paths satisfying the contraction
    double worst_ratio = 0.0;

    double holding_fraction() const {
        return n_qualifying == 0 ? 0.0
                                 : static_cast<double>(n_holding) /
                                       static_cast<double>(n_qualifying);
    }
};

// Full-difference contraction |v_t - u_t|^2 <= exp(-alpha t + eps l)|v_0 - u_0|^2
// on paths whose energy flux satisfies int_0^t ||grad z||^2 <= l + K t for both
// trajectories.
inline FullCheckResult foias_prodi_full_check(const std::vector<CoupledTrace>& ensemble,
                                              double alpha, double eps, double K_flux,
                                              double l_flux) {
    FullCheckResult res;
    res.n_paths = ensemble.size();
    for (const CoupledTrace& tr : ensemble) {
        res.coupling_level = tr.coupling_level;
        bool qualifies = true;
        for (std::size_t k = 0; k < tr.times.size(); ++k) {
            const double cap = l_flux + K_flux * tr.times[k];
            if (tr.flux_u[k] > cap || tr.flux_v[k] > cap) {
                qualifies = false;
                break;
            }
        }
        if (!qualifies) continue;
        ++res.n_qualifying;
        const double base = tr.full_diff_sq[0];
        bool holds = true;
        double worst = 0.0;
        for (std::size_t k = 0; k < tr.times.size(); ++k) {
            const double bound = std::exp(-alpha * tr.times[k] + eps * l_flux) * base;
            const double ratio = bound > 0.0
                                     ? tr.full_diff_sq[k] / bound
                                     : (tr.full_diff_sq[k] == 0.0 ? 0.0 : 1e300);
            worst = std::max(worst, ratio);
            if (ratio > 1.0 + 1e-8) holds = false;
        }
        res.worst_ratio = std::max(res.worst_ratio, worst);
        if (holds) ++res.n_holding;
    }
    return res;
}

struct NStarSweep {
    double eps = 0.0;
    std::vector<FullCheckResult> per_level;
    std::size_t n_star = 0;  // smallest level reaching the target fraction
    bool found = false;
};

// Runs the coupled ensemble at each candidate level (identical noise streams
// across levels) and reports the smallest N whose contraction holds on the
// requested fraction of qualifying paths.
inline NStarSweep estimate_n_star(const Stepper& stepper, const NormParams& p,
                                  const std::vector<std::pair<State, State>>& starts,
                                  const std::vector<std::size_t>& levels, double eps,
                                  double K_flux, double l_flux, double horizon,
                                  std::size_t stride, uint64_t seed, uint64_t stream_base,
                                  unsigned workers, double target_fraction = 0.99) {
    NStarSweep sweep;
    sweep.eps = eps;
    const std::size_t n_steps = step_count(horizon, stepper.params().dt);
    for (std::size_t N : levels) {
        std::vector<CoupledTrace> ensemble(starts.size());
        parallel_for(starts.size(), workers, [&](std::size_t i) {
            RngStream rng = split_stream(seed, stream_base + i);
            CoupledPair pair{starts[i].first, starts[i].second, N, rng.stream_id()};
            ensemble[i] = run_coupled(stepper, p, pair, n_steps, stride, rng);
        });
        FullCheckResult res = foias_prodi_full_check(ensemble, p.alpha, eps, K_flux, l_flux);
        sweep.per_level.push_back(res);
        if (!sweep.found && res.n_qualifying > 0 &&
            res.holding_fraction() >= target_fraction) {
            sweep.found = true;
            sweep.n_star = N;
        }
    }
    return sweep;
}

// Total-variation closeness certificate accumulated along a coupled window.
struct GirsanovLedger {
    double cost = 0.0;
    double horizon = 0.0;
    bool saturated = false;

    // surrogate mirroring the [exp(.) - 1]^{1/2} bound shape
    double tv_surrogate() const {
        if (cost > 700.0) return 1.0;
        return std::min(1.0, 0.5 * std::sqrt(std::expm1(cost)));
    }
};

inline GirsanovLedger girsanov_cost(const CoupledTrace& tr, double window_start,
                                    double window_end) {
    if (window_end < window_start)
        throw std::invalid_argument("girsanov_cost: empty window");
    GirsanovLedger ledger;
    double c0 = 0.0, c1 = 0.0;
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
        if (tr.times[k] <= window_start) c0 = tr.girsanov_cost[k];
        if (tr.times[k] <= window_end) c1 = tr.girsanov_cost[k];
    }
    ledger.cost = c1 - c0;
    ledger.horizon = window_end - window_start;
    ledger.saturated = ledger.cost > 700.0;
    return ledger;
}

}  // namespace nlwlab

#endif
