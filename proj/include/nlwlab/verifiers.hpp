#ifndef NLWLAB_VERIFIERS_HPP
#define NLWLAB_VERIFIERS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "nlwlab/dynamics.hpp"
#include "nlwlab/parallel.hpp"
#include "nlwlab/stats.hpp"

namespace nlwlab {

// Samples of one scalar functional along an ensemble: values[i][k] is
// trajectory i at grid time times[k].
struct EnsembleTrace {
    std::vector<double> times;
    std::vector<std::vector<double>> values;

    std::vector<double> at_time(std::size_t k) const {
        std::vector<double> col(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) col[i] = values[i][k];
        return col;
    }
};

// Run M trajectories from `initial`, recording `functional(state)` every
// `stride` steps (including step 0). Streams are split per trajectory, so the
// result is independent of the worker count.
template <typename Fn>
EnsembleTrace run_ensemble(const Stepper& stepper, const State& initial, std::size_t M,
                           std::size_t n_steps, std::size_t stride, uint64_t seed,
                           uint64_t stream_base, unsigned workers, Fn&& functional) {
    stride = std::max<std::size_t>(1, stride);
    const std::size_t n_grid = n_steps / stride + 1;
    EnsembleTrace trace;
    trace.times.resize(n_grid);
    for (std::size_t k = 0; k < n_grid; ++k)
        trace.times[k] = static_cast<double>(k * stride) * stepper.params().dt;
    trace.values.assign(M, std::vector<double>(n_grid, 0.0));
    parallel_for(M, workers, [&](std::size_t i) {
        RngStream rng = split_stream(seed, stream_base + i);
        State st = initial;
        trace.values[i][0] = functional(st);
        std::size_t k = 1;
        for (std::size_t step = 1; step <= n_steps; ++step) {
            st = stepper.step(st, rng);
            if (step % stride == 0) trace.values[i][k++] = functional(st);
        }
    });
    return trace;
}

enum class VerifyStatus { pass, flat, fail, inconclusive };

inline const char* to_string(VerifyStatus s) {
    switch (s) {
        case VerifyStatus::pass: return "pass";
        case VerifyStatus::flat: return "flat";
        case VerifyStatus::fail: return "fail";
        case VerifyStatus::inconclusive: return "inconclusive";
    }
    return "?";
}

// Fit of E_hat(t) <= 2 exp(-rate * t) * start_value + C against an ensemble
// mean curve: C from the tail plateau, rate from the log-linear decay window.
struct DecayFitReport {
    std::vector<double> times;
    std::vector<double> mean_curve;
    std::vector<double> se_curve;
    double c_hat = 0.0;
    double c_se = 0.0;
    double rate_hat = 0.0;
    double rate_se = 0.0;
    double start_value = 0.0;
    bool bound_ok = false;
    VerifyStatus status = VerifyStatus::inconclusive;
};

inline DecayFitReport fit_decay_bound(const EnsembleTrace& trace, double start_value) {
    DecayFitReport rep;
    rep.times = trace.times;
    rep.start_value = start_value;
    const std::size_t n_grid = trace.times.size();
    const std::size_t M = trace.values.size();
    rep.mean_curve.resize(n_grid);
    rep.se_curve.resize(n_grid);
    for (std::size_t k = 0; k < n_grid; ++k) {
        const std::vector<double> col = trace.at_time(k);
        rep.mean_curve[k] = mean(col);
        rep.se_curve[k] = M > 1 ? std_error(col) : 0.0;
    }

    // plateau over the last quarter of the grid
    const std::size_t tail_from = n_grid - std::max<std::size_t>(2, n_grid / 4);
    std::vector<double> tail(rep.mean_curve.begin() + static_cast<long>(tail_from),
                             rep.mean_curve.end());
    rep.c_hat = mean(tail);
    double tail_se = 0.0;
    for (std::size_t k = tail_from; k < n_grid; ++k)
        tail_se = std::max(tail_se, rep.se_curve[k]);
    rep.c_se = tail_se;

    // decay window: excess above the plateau still resolvable
    std::vector<double> tx, ly;
    const double z = quantile_normal_975();
    for (std::size_t k = 0; k < n_grid; ++k) {
        const double excess = rep.mean_curve[k] - rep.c_hat;
        if (excess > std::max(3.0 * (rep.se_curve[k] + rep.c_se), 1e-12)) {
            tx.push_back(trace.times[k]);
            ly.push_back(std::log(excess));
        }
    }
    const double initial_excess = rep.mean_curve[0] - rep.c_hat;
    if (initial_excess <= 3.0 * (rep.se_curve[0] + rep.c_se + 1e-300)) {
        // started at (or below) the plateau: nothing to fit, curve must be flat
        rep.status = VerifyStatus::flat;
        bool flat = true;
        for (std::size_t k = 0; k < n_grid; ++k)
            if (std::fabs(rep.mean_curve[k] - rep.c_hat) >
                z * (rep.se_curve[k] + rep.c_se) + 1e-9 * std::fabs(rep.c_hat))
                flat = false;
        rep.bound_ok = flat;
        if (!flat) rep.status = VerifyStatus::fail;
        return rep;
    }
    const LineFit fit = fit_line(tx, ly);
    if (!fit.ok || fit.slope >= 0.0) {
        rep.status = VerifyStatus::inconclusive;
        return rep;
    }
    rep.rate_hat = -fit.slope;
    rep.rate_se = fit.slope_se;

    rep.bound_ok = true;
    for (std::size_t k = 0; k < n_grid; ++k) {
        const double bound = 2.0 * std::exp(-rep.rate_hat * trace.times[k]) * start_value +
                             rep.c_hat + z * (rep.se_curve[k] + rep.c_se);
        if (rep.mean_curve[k] > bound) rep.bound_ok = false;
    }
    const bool rate_positive = rep.rate_hat - z * rep.rate_se > 0.0;
    rep.status = (rep.bound_ok && rate_positive) ? VerifyStatus::pass : VerifyStatus::fail;
    return rep;
}

struct LyapunovReport {
    unsigned m = 1;
    DecayFitReport fit;
    double alpha_hat = 0.0;  // fitted rate divided by m
    double alpha_se = 0.0;
};

// Ensemble check of E w_m(u_t) <= 2 exp(-alpha m t) w_m(v) + C_m.
inline LyapunovReport verify_lyapunov(const Stepper& stepper, const NormParams& p, unsigned m,
                                      const State& initial, std::size_t M, double horizon,
                                      std::size_t n_grid, uint64_t seed, uint64_t stream_base,
                                      unsigned workers, double kappa = 0.0) {
    const double dt = stepper.params().dt;
    const std::size_t n_steps = step_count(horizon, dt);
    const std::size_t stride = std::max<std::size_t>(1, n_steps / std::max<std::size_t>(1, n_grid));
    const Collocation& colloc = stepper.collocation();
    auto w_m = [&](const State& st) {
        return weights(st, stepper.domain(), stepper.nonlinearity(), p, colloc, m, kappa)
            .weight_w_m;
    };
    EnsembleTrace trace = run_ensemble(stepper, initial, M, n_steps, stride, seed, stream_base,
                                       workers, w_m);
    LyapunovReport rep;
    rep.m = m;
    rep.fit = fit_decay_bound(trace, w_m(initial));
    rep.alpha_hat = rep.fit.rate_hat / static_cast<double>(m);
    rep.alpha_se = rep.fit.rate_se / static_cast<double>(m);
    return rep;
}

// Ensemble check of E E^k(u_t) <= exp(-alpha k t) E^k(v) + C (even k keeps the
// power well defined for negative energies).
inline LyapunovReport verify_energy_moment(const Stepper& stepper, const NormParams& p,
                                           unsigned k, const State& initial, std::size_t M,
                                           double horizon, std::size_t n_grid, uint64_t seed,
                                           uint64_t stream_base, unsigned workers) {
    const double dt = stepper.params().dt;
    const std::size_t n_steps = step_count(horizon, dt);
    const std::size_t stride = std::max<std::size_t>(1, n_steps / std::max<std::size_t>(1, n_grid));
    const Collocation& colloc = stepper.collocation();
    auto e_k = [&](const State& st) {
        return std::pow(energy(st, stepper.domain(), stepper.nonlinearity(), p, colloc),
                        static_cast<double>(k));
    };
    EnsembleTrace trace = run_ensemble(stepper, initial, M, n_steps, stride, seed, stream_base,
                                       workers, e_k);
    LyapunovReport rep;
    rep.m = k;
    rep.fit = fit_decay_bound(trace, e_k(initial));
    rep.alpha_hat = rep.fit.rate_hat / static_cast<double>(k);
    rep.alpha_se = rep.fit.rate_se / static_cast<double>(k);
    return rep;
}

struct TightnessReport {
    std::vector<double> times;
    std::vector<double> log_moment;  // log E exp(int_0^t |u|^exponent_{H^s})
    double slope_hat = 0.0;          // fitted growth constant c
    double slope_se = 0.0;
    double max_residual = 0.0;
    double min_ess = 0.0;
    bool saturated = false;
    VerifyStatus status = VerifyStatus::inconclusive;
};

// Exponential tightness: (1/t) log E exp(int_0^t |u_tau|^exponent dtau) must
// stay bounded; the bound is reported as the fitted slope of the log-moment.
inline TightnessReport verify_exp_tightness(const Stepper& stepper, const NormParams& p,
                                            double exponent, const State& initial, std::size_t M,
                                            double horizon, std::size_t n_grid, uint64_t seed,
                                            uint64_t stream_base, unsigned workers) {
    const double dt = stepper.params().dt;
    const std::size_t n_steps = step_count(horizon, dt);
    const std::size_t stride = std::max<std::size_t>(1, n_steps / std::max<std::size_t>(1, n_grid));
    const std::size_t n_samples = n_steps / stride + 1;

    // per-trajectory running integral of |u|^exponent_{H^s}, trapezoid in time
    std::vector<std::vector<double>> integral(M, std::vector<double>(n_samples, 0.0));
    std::vector<double> times(n_samples);
    for (std::size_t k = 0; k < n_samples; ++k)
        times[k] = static_cast<double>(k * stride) * dt;
    parallel_for(M, workers, [&](std::size_t i) {
        RngStream rng = split_stream(seed, stream_base + i);
        State st = initial;
        double acc = 0.0;
        double prev = std::pow(hs_norm_sq(st, stepper.domain(), p), 0.5 * exponent);
        std::size_t k = 1;
        for (std::size_t step = 1; step <= n_steps; ++step) {
            st = stepper.step(st, rng);
            const double cur = std::pow(hs_norm_sq(st, stepper.domain(), p), 0.5 * exponent);
            acc += 0.5 * (prev + cur) * dt;
            prev = cur;
            if (step % stride == 0) integral[i][k++] = acc;
        }
    });

    TightnessReport rep;
    rep.times = times;
    rep.log_moment.resize(n_samples);
    rep.min_ess = static_cast<double>(M);
    for (std::size_t k = 0; k < n_samples; ++k) {
        std::vector<double> col(M);
        for (std::size_t i = 0; i < M; ++i) col[i] = integral[i][k];
        rep.log_moment[k] = log_mean_exp(col);
        if (k > 0) rep.min_ess = std::min(rep.min_ess, ess_from_log_weights(col));
    }
    rep.saturated = rep.min_ess < static_cast<double>(M) / 100.0;

    std::vector<double> tx(rep.times.begin() + 1, rep.times.end());
    std::vector<double> gy(rep.log_moment.begin() + 1, rep.log_moment.end());
    const LineFit fit = fit_line(tx, gy);
    if (!fit.ok) return rep;
    rep.slope_hat = fit.slope;
    rep.slope_se = fit.slope_se;
    for (std::size_t k = 0; k < tx.size(); ++k)
        rep.max_residual =
            std::max(rep.max_residual, gy[k] - (fit.intercept + fit.slope * tx[k]));
    rep.status = rep.saturated ? VerifyStatus::inconclusive : VerifyStatus::pass;
    return rep;
}

}  // namespace nlwlab

#endif
