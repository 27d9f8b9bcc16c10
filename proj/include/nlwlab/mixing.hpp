#ifndef NLWLAB_MIXING_HPP
#define NLWLAB_MIXING_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "nlwlab/dynamics.hpp"
#include "nlwlab/parallel.hpp"
#include "nlwlab/stats.hpp"

namespace nlwlab {

struct TestFunction {
    std::string name;
    std::function<double(const State&)> fn;
};

// Default dictionary for the dual-Lipschitz metric: tanh of the natural
// H-coordinates xi_j = sqrt(lambda_j) u_j and w_j = udot_j + alpha u_j of the
// first few modes, plus the energy clipped to [0,1]. The 1/2 factor keeps
// sup|psi| + Lip(psi) <= 1 for the coordinate functions (both coordinates are
// 1-Lipschitz in |.|_H).
inline std::vector<TestFunction> default_mixing_dictionary(const SpectralDomain& d,
                                                           const NormParams& p,
                                                           const Nonlinearity& nl,
                                                           std::size_t n_low = 4) {
    std::vector<TestFunction> dict;
    n_low = std::min(n_low, d.n_modes);
    for (std::size_t j = 0; j < n_low; ++j) {
        const double sq = std::sqrt(d.eigenvalues[j]);
        dict.push_back({"tanh_pos_" + std::to_string(j + 1),
                        [j, sq](const State& st) { return 0.5 * std::tanh(sq * st.position[j]); }});
        const double alpha = p.alpha;
        dict.push_back({"tanh_vel_" + std::to_string(j + 1),
                        [j, alpha](const State& st) {
                            return 0.5 * std::tanh(st.velocity[j] + alpha * st.position[j]);
                        }});
    }
    auto colloc = std::make_shared<Collocation>(d);
    dict.push_back({"energy_clip", [d, nl, p, colloc](const State& st) {
                        const double e = energy(st, d, nl, p, *colloc);
                        return 0.5 * std::clamp(e, 0.0, 1.0);
                    }});
    return dict;
}

struct MixingReport {
    std::vector<double> times;
    std::vector<double> distance;     // d_hat(t), max over the dictionary
    std::vector<double> noise_floor;  // Monte Carlo floor per time
    std::vector<double> fit_times;    // resolvable window used for the fit
    double kappa_hat = 0.0;
    double kappa_se = 0.0;
    double decay_factor = 0.0;  // d(first)/d(last) over the fitted window
    bool ok = false;
};

// Empirical dual-Lipschitz distance between the laws issued from z and z'
// (independent ensembles), with a log-linear decay fit over the window where
// the distance is resolvable above the Monte Carlo floor.
inline MixingReport estimate_mixing(const Stepper& stepper, const State& z, const State& z_prime,
                                    const std::vector<TestFunction>& dict, std::size_t M,
                                    double horizon, std::size_t n_grid, uint64_t seed,
                                    uint64_t stream_base, unsigned workers) {
    const double dt = stepper.params().dt;
    const std::size_t n_steps = step_count(horizon, dt);
    const std::size_t stride = std::max<std::size_t>(1, n_steps / std::max<std::size_t>(1, n_grid));
    const std::size_t n_samples = n_steps / stride + 1;
    const std::size_t F = dict.size();

    // accumulate sums and square sums per (ensemble, time, function)
    std::vector<std::vector<double>> sum(2, std::vector<double>(n_samples * F, 0.0)),
        sumsq(2, std::vector<double>(n_samples * F, 0.0));

    for (int side = 0; side < 2; ++side) {
        const State& start = side == 0 ? z : z_prime;
        const uint64_t base = stream_base + static_cast<uint64_t>(side) * M;
        std::vector<std::vector<double>> partial(M);
        parallel_for(M, workers, [&](std::size_t i) {
            RngStream rng = split_stream(seed, base + i);
            State st = start;
            std::vector<double> vals(n_samples * F, 0.0);
            std::size_t k = 0;
            auto record = [&]() {
                for (std::size_t f = 0; f < F; ++f) vals[k * F + f] = dict[f].fn(st);
                ++k;
            };
            record();
            for (std::size_t step = 1; step <= n_steps; ++step) {
                st = stepper.step(st, rng);
                if (step % stride == 0) record();
            }
            partial[i] = std::move(vals);
        });
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t x = 0; x < n_samples * F; ++x) {
                sum[side][x] += partial[i][x];
                sumsq[side][x] += partial[i][x] * partial[i][x];
            }
    }

    MixingReport rep;
    rep.times.resize(n_samples);
    rep.distance.resize(n_samples);
    rep.noise_floor.resize(n_samples);
    const double Md = static_cast<double>(M);
    for (std::size_t k = 0; k < n_samples; ++k) {
        rep.times[k] = static_cast<double>(k * stride) * dt;
        double best = 0.0, floor = 0.0;
        for (std::size_t f = 0; f < F; ++f) {
            const double m0 = sum[0][k * F + f] / Md;
            const double m1 = sum[1][k * F + f] / Md;
            const double v0 = std::max(0.0, sumsq[0][k * F + f] / Md - m0 * m0);
            const double v1 = std::max(0.0, sumsq[1][k * F + f] / Md - m1 * m1);
            best = std::max(best, std::fabs(m0 - m1));
            floor = std::max(floor, std::sqrt((v0 + v1) / Md));
        }
        rep.distance[k] = best;
        rep.noise_floor[k] = floor;
    }

    std::vector<double> tx, ly;
    for (std::size_t k = 0; k < n_samples; ++k) {
        if (rep.distance[k] > 3.0 * rep.noise_floor[k] && rep.distance[k] > 0.0) {
            tx.push_back(rep.times[k]);
            ly.push_back(std::log(rep.distance[k]));
            rep.fit_times.push_back(rep.times[k]);
        } else if (!tx.empty()) {
            break;  // fit only the initial resolvable window
        }
    }
    if (tx.size() >= 4) {
        const LineFit fit = fit_line(tx, ly);
        if (fit.ok) {
            rep.kappa_hat = -fit.slope;
            rep.kappa_se = fit.slope_se;
            rep.decay_factor = std::exp(ly.front() - ly.back());
            rep.ok = true;
        }
    }
    return rep;
}

}  // namespace nlwlab

#endif
