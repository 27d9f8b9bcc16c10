#ifndef NLWLAB_FEYNMAN_KAC_HPP
#define NLWLAB_FEYNMAN_KAC_HPP

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

// Potential from the small-oscillation class: an Observable whose oscillation
// stays below the configured budget delta.
struct PotentialV {
    Observable v;
    double delta_budget = 0.5;
};

inline PotentialV make_potential(Observable v, double delta_budget = 0.5) {
    if (v.oscillation >= delta_budget)
        throw std::invalid_argument("make_potential: oscillation " +
                                    std::to_string(v.oscillation) + " >= budget " +
                                    std::to_string(delta_budget));
    return PotentialV{std::move(v), delta_budget};
}

struct WeightCollapseError : std::runtime_error {
    double ess;
    std::size_t period;
    WeightCollapseError(double e, std::size_t k)
        : std::runtime_error("particle weights collapsed (ESS " + std::to_string(e) +
                             ") in period " + std::to_string(k)),
          ess(e),
          period(k) {}
};

// systematic resampling: one uniform draw, M evenly spaced positions
inline std::vector<std::size_t> systematic_resample(const std::vector<double>& log_weights,
                                                    RngStream& rng) {
    const std::size_t M = log_weights.size();
    const double lse = log_sum_exp(log_weights);
    std::vector<double> cumulative(M);
    double acc = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
        acc += std::exp(log_weights[i] - lse);
        cumulative[i] = acc;
    }
    cumulative[M - 1] = 1.0;
    std::vector<std::size_t> picks(M);
    const double u = rng.next_uniform();  // (0, 1]
    std::size_t j = 0;
    for (std::size_t i = 0; i < M; ++i) {
        const double pos = (static_cast<double>(i) + u) / static_cast<double>(M);
        while (j + 1 < M && cumulative[j] < pos) ++j;
        picks[i] = j;
    }
    return picks;
}

struct CloningResult {
    double log_lambda = 0.0;  // time-averaged log growth of the mean weight
    double log_lambda_se = 0.0;
    double lambda = 1.0;
    std::vector<double> period_log_growth;
    double min_ess = 0.0;
    std::vector<State> ensemble;  // terminal equal-weight particles (mu_hat)
    std::size_t M = 0;
    double T = 0.0;
};

// Cloning estimator of the principal eigenvalue and eigenmeasure: evolve
// particles, multiply weights by exp(int V), systematically resample each
// period, accumulate the per-period log growth of the mean weight.
inline CloningResult run_cloning(const Stepper& stepper, const PotentialV& V,
                                 const State& initial, std::size_t M, double T,
                                 double resample_period, uint64_t seed, uint64_t stream_base,
                                 unsigned workers) {
    const double dt = stepper.params().dt;
    if (!(resample_period >= dt))
        throw std::invalid_argument("run_cloning: resample period below dt");
    const std::size_t steps_per_period = step_count(resample_period, dt);
    const std::size_t n_periods =
        std::max<std::size_t>(1, step_count(T, dt) / std::max<std::size_t>(1, steps_per_period));

    std::vector<State> particles(M, initial);
    std::vector<double> log_w(M, 0.0);
    CloningResult res;
    res.M = M;
    res.T = static_cast<double>(n_periods * steps_per_period) * dt;
    res.min_ess = static_cast<double>(M);

    // stream layout: per (period, particle) for dynamics, then one per period
    // for the resampling draw
    const uint64_t resample_base = stream_base + static_cast<uint64_t>(n_periods) * M;

    for (std::size_t k = 0; k < n_periods; ++k) {
        parallel_for(M, workers, [&](std::size_t i) {
            RngStream rng = split_stream(seed, stream_base + static_cast<uint64_t>(k) * M + i);
            State st = particles[i];
            double acc = 0.0;
            double prev = V.v(st);
            for (std::size_t s = 0; s < steps_per_period; ++s) {
                st = stepper.step(st, rng);
                const double cur = V.v(st);
                acc += 0.5 * (prev + cur) * dt;
                prev = cur;
            }
            particles[i] = std::move(st);
            log_w[i] = acc;
        });
        res.period_log_growth.push_back(log_mean_exp(log_w));
        const double ess = ess_from_log_weights(log_w);
        res.min_ess = std::min(res.min_ess, ess);
        if (ess < static_cast<double>(M) / 100.0)
            throw WeightCollapseError(ess, k);

        RngStream rng = split_stream(seed, resample_base + k);
        const std::vector<std::size_t> picks = systematic_resample(log_w, rng);
        std::vector<State> next(M);
        for (std::size_t i = 0; i < M; ++i) next[i] = particles[picks[i]];
        particles = std::move(next);
        std::fill(log_w.begin(), log_w.end(), 0.0);
    }

    double total = 0.0;
    for (double g : res.period_log_growth) total += g;
    res.log_lambda = total / res.T;
    res.lambda = std::exp(res.log_lambda);
    if (res.period_log_growth.size() >= 2) {
        const double per_period_se = std_error(res.period_log_growth);
        res.log_lambda_se = per_period_se * std::sqrt(static_cast<double>(n_periods)) / res.T;
    }
    res.ensemble = std::move(particles);
    return res;
}

struct HEstimate {
    std::vector<double> h_values;     // normalized so the mu_hat average is 1
    std::vector<double> se;           // Monte Carlo SE of the raw values, scaled
    std::vector<double> mu_h_values;  // normalized values on the mu_hat sample
    double normalization = 1.0;       // mu_hat-average of the raw estimates
    bool variance_flag = false;
};

// h_V(u) ~ lambda^{-t} E_u exp(int_0^t V), probed pointwise and normalized so
// that <h, mu_hat> = 1 over the supplied ensemble subsample.
inline HEstimate estimate_h(const Stepper& stepper, const PotentialV& V, double log_lambda,
                            const std::vector<State>& probe_states,
                            const std::vector<State>& mu_sample, double t, std::size_t M,
                            uint64_t seed, uint64_t stream_base, unsigned workers) {
    const double dt = stepper.params().dt;
    const std::size_t n_steps = step_count(t, dt);
    const double horizon = static_cast<double>(n_steps) * dt;

    auto raw_at = [&](const State& start, uint64_t base, double& se_out) {
        std::vector<double> lw(M);
        parallel_for(M, workers, [&](std::size_t i) {
            RngStream rng = split_stream(seed, base + i);
            State st = start;
            double acc = 0.0;
            double prev = V.v(st);
            for (std::size_t s = 0; s < n_steps; ++s) {
                st = stepper.step(st, rng);
                const double cur = V.v(st);
                acc += 0.5 * (prev + cur) * dt;
                prev = cur;
            }
            lw[i] = acc;
        });
        const double log_est = log_mean_exp(lw) - log_lambda * horizon;
        // delta-method SE of the log-mean-exp, scaled to the estimate
        std::vector<double> w(M);
        double mean_w = 0.0;
        for (std::size_t i = 0; i < M; ++i) {
            w[i] = std::exp(lw[i] - log_mean_exp(lw));
            mean_w += w[i];
        }
        mean_w /= static_cast<double>(M);
        double var_w = 0.0;
        for (double x : w) var_w += (x - mean_w) * (x - mean_w);
        var_w /= static_cast<double>(M > 1 ? M - 1 : 1);
        const double est = std::exp(log_est);
        se_out = est * std::sqrt(var_w / static_cast<double>(M));
        return est;
    };

    HEstimate out;
    uint64_t base = stream_base;
    std::vector<double> raw(probe_states.size());
    out.se.resize(probe_states.size());
    for (std::size_t p = 0; p < probe_states.size(); ++p) {
        raw[p] = raw_at(probe_states[p], base, out.se[p]);
        base += M;
    }
    std::vector<double> raw_mu(mu_sample.size());
    double norm = 0.0;
    for (std::size_t s = 0; s < mu_sample.size(); ++s) {
        double se_dummy = 0.0;
        raw_mu[s] = raw_at(mu_sample[s], base, se_dummy);
        norm += raw_mu[s];
        base += M;
    }
    norm /= static_cast<double>(mu_sample.size());
    out.normalization = norm;
    out.h_values.resize(probe_states.size());
    for (std::size_t p = 0; p < probe_states.size(); ++p) {
        out.h_values[p] = raw[p] / norm;
        out.se[p] /= norm;
        if (out.se[p] > 0.5 * std::fabs(out.h_values[p])) out.variance_flag = true;
    }
    out.mu_h_values.resize(mu_sample.size());
    for (std::size_t s = 0; s < mu_sample.size(); ++s) out.mu_h_values[s] = raw_mu[s] / norm;
    return out;
}

struct EigenRelationReport {
    std::vector<std::string> psi_names;
    std::vector<double> lhs;  // <P_t^V psi, mu_hat>
    std::vector<double> rhs;  // lambda^t <psi, mu_hat>
    std::vector<double> lhs_se;
    std::vector<double> relative_error;
    double worst_relative_error = 0.0;
};

// Checks the dual eigen-relation on the estimated eigenmeasure: propagating
// mu_hat by the weighted semigroup multiplies psi-averages by lambda^t.
inline EigenRelationReport check_eigen_relation(const Stepper& stepper, const PotentialV& V,
                                                double log_lambda,
                                                const std::vector<State>& mu_sample,
                                                const std::vector<Observable>& psi_set, double t,
                                                uint64_t seed, uint64_t stream_base,
                                                unsigned workers) {
    const double dt = stepper.params().dt;
    const std::size_t n_steps = step_count(t, dt);
    const double horizon = static_cast<double>(n_steps) * dt;
    const std::size_t n = mu_sample.size();
    const std::size_t K = psi_set.size();

    // one weighted path per ensemble member
    std::vector<std::vector<double>> weighted(K, std::vector<double>(n, 0.0));
    std::vector<double> start_vals(K, 0.0);
    parallel_for(n, workers, [&](std::size_t i) {
        RngStream rng = split_stream(seed, stream_base + i);
        State st = mu_sample[i];
        double acc = 0.0;
        double prev = V.v(st);
        for (std::size_t s = 0; s < n_steps; ++s) {
            st = stepper.step(st, rng);
            const double cur = V.v(st);
            acc += 0.5 * (prev + cur) * dt;
            prev = cur;
        }
        for (std::size_t k = 0; k < K; ++k) weighted[k][i] = std::exp(acc) * psi_set[k](st);
    });

    EigenRelationReport rep;
    const double growth = std::exp(log_lambda * horizon);
    for (std::size_t k = 0; k < K; ++k) {
        rep.psi_names.push_back(psi_set[k].name);
        double mean_start = 0.0, mean_abs = 0.0;
        for (const State& s : mu_sample) {
            const double v = psi_set[k](s);
            mean_start += v;
            mean_abs += std::fabs(v);
        }
        mean_start /= static_cast<double>(n);
        mean_abs /= static_cast<double>(n);
        const double lhs = mean(weighted[k]);
        const double lhs_se = n > 1 ? std_error(weighted[k]) : 0.0;
        const double rhs = growth * mean_start;
        rep.lhs.push_back(lhs);
        rep.rhs.push_back(rhs);
        rep.lhs_se.push_back(lhs_se);
        // scale by the magnitude the semigroup actually propagates, so psi
        // with mean near zero do not blow the relative error up
        const double scale = std::max(growth * mean_abs, 1e-12);
        const double err = std::fabs(lhs - rhs) / scale;
        rep.relative_error.push_back(err);
        rep.worst_relative_error = std::max(rep.worst_relative_error, err);
    }
    return rep;
}

struct MomentBoundReport {
    std::vector<std::size_t> ensemble_sizes;
    std::vector<double> estimates;  // <|u|^m_{H^s} + exp(kappa E), mu_hat_M>
    std::vector<double> se;
    bool saturated = false;
    bool stable = false;
};

// Finiteness proxy for the eigenmeasure moments: estimates over doubling
// ensemble sizes must stabilize within their confidence intervals.
inline MomentBoundReport verify_moment_bound(const Stepper& stepper, const PotentialV& V,
                                             const State& initial, unsigned m, double kappa,
                                             const NormParams& p, std::size_t M_base, double T,
                                             double resample_period, uint64_t seed,
                                             uint64_t stream_base, unsigned workers) {
    MomentBoundReport rep;
    const Collocation& colloc = stepper.collocation();
    uint64_t base = stream_base;
    for (std::size_t mult : {std::size_t{1}, std::size_t{2}, std::size_t{4}}) {
        const std::size_t M = M_base * mult;
        CloningResult cr =
            run_cloning(stepper, V, initial, M, T, resample_period, seed, base, workers);
        base += 16 * M * static_cast<uint64_t>(T / resample_period + 2);
        std::vector<double> vals(M);
        for (std::size_t i = 0; i < M; ++i) {
            const double hs = std::sqrt(
                hs_norm_sq(cr.ensemble[i], stepper.domain(), p));
            const double e =
                energy(cr.ensemble[i], stepper.domain(), stepper.nonlinearity(), p, colloc);
            const double arg = kappa * e;
            if (arg > 700.0) {
                rep.saturated = true;
                vals[i] = std::pow(hs, static_cast<double>(m));
            } else {
                vals[i] = std::pow(hs, static_cast<double>(m)) + std::exp(arg);
            }
        }
        rep.ensemble_sizes.push_back(M);
        rep.estimates.push_back(mean(vals));
        rep.se.push_back(M > 1 ? std_error(vals) : 0.0);
    }
    const double z = quantile_normal_975();
    const double gap01 = std::fabs(rep.estimates[1] - rep.estimates[0]);
    const double gap12 = std::fabs(rep.estimates[2] - rep.estimates[1]);
    rep.stable = gap12 <= z * (rep.se[1] + rep.se[2]) &&
                 gap01 <= 2.0 * z * (rep.se[0] + rep.se[1]);
    return rep;
}

}  // namespace nlwlab

#endif
