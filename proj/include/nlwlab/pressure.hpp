#ifndef NLWLAB_PRESSURE_HPP
#define NLWLAB_PRESSURE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "nlwlab/dynamics.hpp"
#include "nlwlab/observable.hpp"
#include "nlwlab/parallel.hpp"
#include "nlwlab/stats.hpp"

namespace nlwlab {

// time average of sampled psi values along one path, trapezoid quadrature
inline double occupation_average(const std::vector<double>& times,
                                 const std::vector<double>& psi_values) {
    if (times.size() != psi_values.size() || times.size() < 2)
        throw std::invalid_argument("occupation_average: need >= 2 samples");
    const double span = times.back() - times.front();
    if (!(span > 0.0)) throw std::invalid_argument("occupation_average: zero-length path");
    double acc = 0.0;
    for (std::size_t k = 1; k < times.size(); ++k)
        acc += 0.5 * (psi_values[k] + psi_values[k - 1]) * (times[k] - times[k - 1]);
    return acc / span;
}

// Per-trajectory integrals int_0^t psi_k(u_tau) dtau for a batch of
// observables, accumulated at full step resolution over M independent
// trajectories. This is the shared raw material of every pressure estimate.
struct OccupationSample {
    double t = 0.0;
    std::size_t M = 0;
    std::vector<std::string> observable_names;
    std::vector<std::vector<double>> integrals;  // [observable][trajectory]
};

inline OccupationSample sample_occupation_integrals(const Stepper& stepper, const State& initial,
                                                    const std::vector<Observable>& observables,
                                                    double t, std::size_t M, uint64_t seed,
                                                    uint64_t stream_base, unsigned workers) {
    const double dt = stepper.params().dt;
    const std::size_t n_steps = step_count(t, dt);
    if (n_steps == 0) throw std::invalid_argument("sample_occupation_integrals: zero horizon");
    const std::size_t K = observables.size();

    OccupationSample out;
    out.t = static_cast<double>(n_steps) * dt;
    out.M = M;
    for (const Observable& o : observables) out.observable_names.push_back(o.name);
    out.integrals.assign(K, std::vector<double>(M, 0.0));

    parallel_for(M, workers, [&](std::size_t i) {
        RngStream rng = split_stream(seed, stream_base + i);
        State st = initial;
        std::vector<double> prev(K), acc(K, 0.0);
        for (std::size_t k = 0; k < K; ++k) prev[k] = observables[k](st);
        for (std::size_t step = 1; step <= n_steps; ++step) {
            st = stepper.step(st, rng);
            for (std::size_t k = 0; k < K; ++k) {
                const double cur = observables[k](st);
                acc[k] += 0.5 * (prev[k] + cur) * dt;
                prev[k] = cur;
            }
        }
        for (std::size_t k = 0; k < K; ++k) out.integrals[k][i] = acc[k];
    });
    return out;
}

// Monte Carlo pressure curve Q_hat(beta psi) on a beta grid, with jackknife
// confidence half-widths and an effective-sample-size diagnostic per point.
struct PressureCurve {
    std::string observable;
    double sup_norm = 1.0;
    double oscillation = 0.0;
    std::vector<double> beta_grid;
    std::vector<double> q_hat;
    std::vector<double> ci;   // 95% jackknife half-widths
    std::vector<double> ess;  // effective sample size of the tilted weights
    double t_used = 0.0;
    std::size_t M_used = 0;
    double occupation_mean = 0.0;  // <psi, mu_hat> from the same trajectories
    double occupation_se = 0.0;
    bool high_variance = false;

    // diagnostic curve from an alternative initial condition, when requested
    std::vector<double> q_hat_alt;
    std::vector<double> ci_alt;
    bool has_alt = false;
};

inline double pressure_point(const std::vector<double>& integrals, double beta, double t,
                             const std::vector<char>& keep) {
    std::vector<double> tilted;
    tilted.reserve(integrals.size());
    for (std::size_t i = 0; i < integrals.size(); ++i)
        if (keep.empty() || keep[i]) tilted.push_back(beta * integrals[i]);
    return log_mean_exp(tilted) / t;
}

inline PressureCurve estimate_pressure_from_sample(const OccupationSample& sample,
                                                   std::size_t obs_index, const Observable& obs,
                                                   const std::vector<double>& beta_grid,
                                                   double oscillation_budget,
                                                   std::size_t jackknife_blocks = 40) {
    const std::vector<double>& S = sample.integrals.at(obs_index);
    PressureCurve curve;
    curve.observable = obs.name;
    curve.sup_norm = obs.sup_norm;
    curve.oscillation = obs.oscillation;
    curve.beta_grid = beta_grid;
    curve.t_used = sample.t;
    curve.M_used = sample.M;

    // local regime guard: beta psi must stay inside the small-oscillation class
    const double beta_max = oscillation_budget / (4.0 * std::max(obs.sup_norm, 1e-300));
    for (double beta : beta_grid)
        if (obs.sup_norm > 0.0 && std::fabs(beta) > beta_max * (1.0 + 1e-12))
            throw std::invalid_argument(
                "estimate_pressure: |beta| sup_norm exceeds the oscillation budget");

    std::vector<double> zeta(S.size());
    for (std::size_t i = 0; i < S.size(); ++i) zeta[i] = S[i] / sample.t;
    curve.occupation_mean = mean(zeta);
    curve.occupation_se = S.size() > 1 ? std_error(zeta) : 0.0;

    const double z = quantile_normal_975();
    for (double beta : beta_grid) {
        auto stat = [&](const std::vector<char>& keep) {
            return pressure_point(S, beta, sample.t, keep);
        };
        auto [estimate, se] = block_jackknife(S.size(), jackknife_blocks, stat);
        curve.q_hat.push_back(beta == 0.0 ? 0.0 : estimate);
        curve.ci.push_back(beta == 0.0 ? 0.0 : z * se);

        std::vector<double> lw(S.size());
        for (std::size_t i = 0; i < S.size(); ++i) lw[i] = beta * S[i];
        const double ess = ess_from_log_weights(lw);
        curve.ess.push_back(ess);
        if (ess < static_cast<double>(S.size()) / 50.0) curve.high_variance = true;
    }
    return curve;
}

// One-call form: simulate and estimate for a single observable, optionally
// with the initial-condition-independence diagnostic.
inline PressureCurve estimate_pressure(const Stepper& stepper, const State& initial,
                                       const Observable& obs,
                                       const std::vector<double>& beta_grid, double t,
                                       std::size_t M, uint64_t seed, uint64_t stream_base,
                                       unsigned workers, double oscillation_budget = 0.5,
                                       const State* initial_alt = nullptr) {
    OccupationSample sample =
        sample_occupation_integrals(stepper, initial, {obs}, t, M, seed, stream_base, workers);
    PressureCurve curve =
        estimate_pressure_from_sample(sample, 0, obs, beta_grid, oscillation_budget);
    if (initial_alt != nullptr) {
        OccupationSample alt = sample_occupation_integrals(stepper, *initial_alt, {obs}, t, M,
                                                           seed, stream_base + M, workers);
        PressureCurve alt_curve =
            estimate_pressure_from_sample(alt, 0, obs, beta_grid, oscillation_budget);
        curve.q_hat_alt = alt_curve.q_hat;
        curve.ci_alt = alt_curve.ci;
        curve.has_alt = true;
    }
    return curve;
}

}  // namespace nlwlab

#endif
