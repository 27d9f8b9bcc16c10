#ifndef NLWLAB_TAIL_RATE_HPP
#define NLWLAB_TAIL_RATE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "nlwlab/dynamics.hpp"
#include "nlwlab/observable.hpp"
#include "nlwlab/parallel.hpp"
#include "nlwlab/stats.hpp"

namespace nlwlab {

// open set O as a finite union of intervals
struct OpenSet {
    std::vector<std::pair<double, double>> intervals;

    bool contains(double x) const {
        for (const auto& [lo, hi] : intervals)
            if (lo < x && x < hi) return true;
        return false;
    }
};

struct TailRateReport {
    std::vector<double> times;       // usable grid times
    std::vector<std::size_t> hits;   // # trajectories with zeta_t in O
    std::vector<double> log_p;       // log P_hat
    std::vector<double> se_log_p;    // binomial delta-method SE of log P_hat
    std::size_t M = 0;
    double fit_from = 0.0;  // decay-regime window start (peak of log P_hat)
    double slope = 0.0;  // fitted d(log P)/dt; the decay rate estimate is -slope
    double slope_se = 0.0;
    bool ok = false;
    bool inconclusive_zero_hits = false;
};

// P{zeta_t^psi in O} across a grid of horizons, from prefix occupation
// averages of M trajectories, with a weighted log-linear fit of the decay.
// With clt_prefactor the 1/sqrt(t) local-CLT prefactor of fixed-interval
// probabilities is divided out before fitting, which removes the leading
// 1/(2t) bias of the slope as an estimate of the limit rate.
inline TailRateReport empirical_tail_rate(const Stepper& stepper, const State& initial,
                                          const Observable& psi, const OpenSet& O,
                                          const std::vector<double>& t_grid, std::size_t M,
                                          uint64_t seed, uint64_t stream_base, unsigned workers,
                                          std::size_t min_hits = 50,
                                          bool clt_prefactor = false) {
    if (t_grid.empty()) throw std::invalid_argument("empirical_tail_rate: empty time grid");
    const double dt = stepper.params().dt;
    std::vector<std::size_t> grid_steps;
    for (double t : t_grid) {
        const std::size_t n = step_count(t, dt);
        if (n == 0) throw std::invalid_argument("empirical_tail_rate: zero horizon in grid");
        grid_steps.push_back(n);
    }
    if (!std::is_sorted(grid_steps.begin(), grid_steps.end()))
        throw std::invalid_argument("empirical_tail_rate: time grid must be increasing");
    const std::size_t n_steps = grid_steps.back();

    std::vector<std::vector<char>> in_o(M, std::vector<char>(t_grid.size(), 0));
    parallel_for(M, workers, [&](std::size_t i) {
        RngStream rng = split_stream(seed, stream_base + i);
        State st = initial;
        double acc = 0.0;
        double prev = psi(st);
        std::size_t g = 0;
        for (std::size_t step = 1; step <= n_steps && g < grid_steps.size(); ++step) {
            st = stepper.step(st, rng);
            const double cur = psi(st);
            acc += 0.5 * (prev + cur) * dt;
            prev = cur;
            while (g < grid_steps.size() && step == grid_steps[g]) {
                const double zeta = acc / (static_cast<double>(step) * dt);
                in_o[i][g] = O.contains(zeta) ? 1 : 0;
                ++g;
            }
        }
    });

    TailRateReport rep;
    rep.M = M;
    for (std::size_t g = 0; g < t_grid.size(); ++g) {
        std::size_t hits = 0;
        for (std::size_t i = 0; i < M; ++i) hits += in_o[i][g];
        if (g + 1 == t_grid.size() && hits == 0) rep.inconclusive_zero_hits = true;
        if (hits < min_hits) continue;
        const double p = static_cast<double>(hits) / static_cast<double>(M);
        rep.times.push_back(static_cast<double>(grid_steps[g]) * dt);
        rep.hits.push_back(hits);
        rep.log_p.push_back(std::log(p));
        rep.se_log_p.push_back(std::sqrt((1.0 - p) / (static_cast<double>(M) * p)));
    }

    // the exponential regime starts once mass stops flowing into O: fit from
    // the peak of log P_hat onward (unless the peak sits so late that no
    // window remains, as in the law-of-large-numbers regime)
    std::size_t start = 0;
    for (std::size_t k = 1; k < rep.log_p.size(); ++k)
        if (rep.log_p[k] > rep.log_p[start]) start = k;
    if (start + 3 > rep.log_p.size()) start = 0;
    std::vector<double> fx, fy, fw;
    for (std::size_t k = start; k < rep.times.size(); ++k) {
        fx.push_back(rep.times[k]);
        fy.push_back(rep.log_p[k] + (clt_prefactor ? 0.5 * std::log(rep.times[k]) : 0.0));
        fw.push_back(1.0 / (rep.se_log_p[k] * rep.se_log_p[k] + 1e-300));
    }
    if (fx.size() >= 3) {
        rep.fit_from = fx.front();
        const LineFit fit = fit_line_weighted(fx, fy, fw);
        if (fit.ok) {
            rep.slope = fit.slope;
            rep.slope_se = fit.slope_se;
            rep.ok = true;
        }
    }
    return rep;
}

}  // namespace nlwlab

#endif
