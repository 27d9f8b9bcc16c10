#ifndef NLWLAB_LEGENDRE_HPP
#define NLWLAB_LEGENDRE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "nlwlab/pressure.hpp"
#include "nlwlab/stats.hpp"

namespace nlwlab {

// Convexification of a sampled curve by isotonic regression on its
// finite-difference slopes (weights = interval widths), then re-integration.
// If beta = 0 is on the grid the result is re-anchored there, since the
// pressure estimate is exact at 0.
inline std::vector<double> convexify(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (y.size() != n || n < 2) throw std::invalid_argument("convexify: need >= 2 points");
    std::vector<double> slopes(n - 1), widths(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        widths[i] = x[i + 1] - x[i];
        if (!(widths[i] > 0.0)) throw std::invalid_argument("convexify: grid not increasing");
        slopes[i] = (y[i + 1] - y[i]) / widths[i];
    }
    std::vector<double> iso = isotonic_nondecreasing(slopes, widths);
    std::vector<double> out(n);
    out[0] = y[0];
    for (std::size_t i = 0; i + 1 < n; ++i) out[i + 1] = out[i] + iso[i] * widths[i];
    // re-anchor at beta = 0 if it is on the grid (pressure is exact there)
    for (std::size_t i = 0; i < n; ++i)
        if (x[i] == 0.0) {
            const double shift = out[i] - y[i];
            for (double& v : out) v -= shift;
            break;
        }
    return out;
}

struct OneSidedDerivatives {
    std::vector<double> d_minus;  // -inf at the left endpoint
    std::vector<double> d_plus;   // +inf at the right endpoint
};

// One-sided difference quotients of a convex piecewise-linear curve. The
// endpoint conventions match a function set to +infinity outside the grid.
inline OneSidedDerivatives one_sided_derivatives(const std::vector<double>& x,
                                                 const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (y.size() != n || n < 2)
        throw std::invalid_argument("one_sided_derivatives: need >= 2 points");
    OneSidedDerivatives d;
    d.d_minus.resize(n);
    d.d_plus.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        d.d_minus[i] = i == 0 ? -std::numeric_limits<double>::infinity()
                              : (y[i] - y[i - 1]) / (x[i] - x[i - 1]);
        d.d_plus[i] = i + 1 == n ? std::numeric_limits<double>::infinity()
                                 : (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
    }
    return d;
}

// Legendre transform of the convexified pressure restricted to the beta grid
// (+infinity outside), sampled on p_grid and normalized to min = 0.
struct RateFunction {
    std::vector<double> p_grid;
    std::vector<double> i_hat;
    double normalization_shift = 0.0;  // amount subtracted to pin the minimum at 0
    double argmin = 0.0;
    double j_lo = 0.0;  // admissible interval J = (D+ Q(-beta0), D- Q(beta0))
    double j_hi = 0.0;
};

inline double conjugate_value(const std::vector<double>& beta, const std::vector<double>& q,
                              double p) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < beta.size(); ++i) best = std::max(best, beta[i] * p - q[i]);
    return best;
}

// The conjugate I(p) = max_i (beta_i p - q_i) attains its minimum -q(0) on the
// subdifferential of (the piecewise-linear interpolant of) q at beta = 0.
inline std::pair<double, double> conjugate_argmin_region(const std::vector<double>& beta,
                                                         const std::vector<double>& q) {
    const std::size_t n = beta.size();
    OneSidedDerivatives d = one_sided_derivatives(beta, q);
    // locate beta = 0 on the grid
    for (std::size_t i = 0; i < n; ++i)
        if (beta[i] == 0.0) return {d.d_minus[i], d.d_plus[i]};
    // strictly between two nodes: the segment slope is the unique subgradient
    for (std::size_t i = 0; i + 1 < n; ++i)
        if (beta[i] < 0.0 && beta[i + 1] > 0.0) {
            const double s = (q[i + 1] - q[i]) / (beta[i + 1] - beta[i]);
            return {s, s};
        }
    // 0 outside the grid range: the extreme slope is approached asymptotically
    if (beta.front() > 0.0) return {-std::numeric_limits<double>::infinity(), d.d_plus.front()};
    return {d.d_minus.back(), std::numeric_limits<double>::infinity()};
}

// default p grid: the slope range of the convex curve, padded and with the
// zero-subgradient point inserted so the minimum of the rate function is hit
inline std::vector<double> default_p_grid(const std::vector<double>& beta,
                                          const std::vector<double>& q_convex,
                                          std::size_t n_points) {
    const std::size_t n = beta.size();
    const double s_lo = (q_convex[1] - q_convex[0]) / (beta[1] - beta[0]);
    const double s_hi = (q_convex[n - 1] - q_convex[n - 2]) / (beta[n - 1] - beta[n - 2]);
    const double pad = 0.25 * std::max(s_hi - s_lo, 1e-8);
    std::vector<double> grid;
    const double lo = s_lo - pad, hi = s_hi + pad;
    for (std::size_t k = 0; k < n_points; ++k)
        grid.push_back(lo + (hi - lo) * static_cast<double>(k) /
                                static_cast<double>(n_points - 1));
    return grid;
}

inline RateFunction legendre(const std::vector<double>& beta_grid,
                             const std::vector<double>& q_values,
                             std::vector<double> p_grid = {}, bool already_convex = false) {
    if (beta_grid.empty()) throw std::invalid_argument("legendre: empty grid");
    const std::vector<double> q =
        already_convex ? q_values : convexify(beta_grid, q_values);

    OneSidedDerivatives d = one_sided_derivatives(beta_grid, q);
    const auto [amin_lo, amin_hi] = conjugate_argmin_region(beta_grid, q);
    double argmin_candidate;
    if (std::isfinite(amin_lo) && std::isfinite(amin_hi))
        argmin_candidate = 0.5 * (amin_lo + amin_hi);
    else if (std::isfinite(amin_lo))
        argmin_candidate = amin_lo;
    else
        argmin_candidate = amin_hi;

    if (p_grid.empty()) p_grid = default_p_grid(beta_grid, q, 101);
    if (std::find(p_grid.begin(), p_grid.end(), argmin_candidate) == p_grid.end()) {
        p_grid.push_back(argmin_candidate);
        std::sort(p_grid.begin(), p_grid.end());
    }

    RateFunction rf;
    rf.p_grid = std::move(p_grid);
    rf.i_hat.reserve(rf.p_grid.size());
    for (double p : rf.p_grid) rf.i_hat.push_back(conjugate_value(beta_grid, q, p));
    const double raw_min = *std::min_element(rf.i_hat.begin(), rf.i_hat.end());
    rf.normalization_shift = raw_min;
    for (double& v : rf.i_hat) v -= raw_min;
    for (std::size_t k = 0; k < rf.p_grid.size(); ++k)
        if (rf.i_hat[k] == 0.0) {
            rf.argmin = rf.p_grid[k];
            break;
        }
    rf.j_lo = d.d_plus.front();
    rf.j_hi = d.d_minus.back();
    return rf;
}

// exact infimum of the (piecewise-linear) unnormalized conjugate over [a, b]
inline double rate_inf_on_interval(const std::vector<double>& beta_grid,
                                   const std::vector<double>& q_convex, double a, double b) {
    if (!(a <= b)) throw std::invalid_argument("rate_inf_on_interval: empty interval");
    double best = std::min(conjugate_value(beta_grid, q_convex, a),
                           conjugate_value(beta_grid, q_convex, b));
    const auto [amin_lo, amin_hi] = conjugate_argmin_region(beta_grid, q_convex);
    const double lo = std::max(a, amin_lo), hi = std::min(b, amin_hi);
    if (lo <= hi) {
        const double pmid = std::isfinite(lo + hi) ? 0.5 * (lo + hi)
                                                   : (std::isfinite(lo) ? lo : hi);
        best = std::min(best, conjugate_value(beta_grid, q_convex, pmid));
    }
    return best;
}

struct IntervalReport {
    double lo = 0.0;
    double hi = 0.0;
    bool degenerate_constant = false;
    bool contains_mean = false;
    double occupation_mean = 0.0;
};

// J^psi = (D+ Q(-beta0), D- Q(beta0)) on the convexified curve; for constant
// observables the interval degenerates and is reported as such.
inline IntervalReport admissible_interval(const PressureCurve& curve) {
    IntervalReport rep;
    rep.occupation_mean = curve.occupation_mean;
    const std::vector<double> q = convexify(curve.beta_grid, curve.q_hat);
    OneSidedDerivatives d = one_sided_derivatives(curve.beta_grid, q);
    rep.lo = d.d_plus.front();
    rep.hi = d.d_minus.back();
    if (curve.oscillation == 0.0 || rep.hi - rep.lo <= 1e-12 * std::max(1.0, std::fabs(rep.hi))) {
        rep.degenerate_constant = true;
        return rep;
    }
    rep.contains_mean = rep.lo < curve.occupation_mean && curve.occupation_mean < rep.hi;
    return rep;
}

struct RegularityReport {
    bool q0_exact_zero = false;
    double worst_convexity_violation = 0.0;  // beyond pooled CI
    double worst_lipschitz_violation = 0.0;  // beyond sup_norm slope + CI
    double worst_negativity = 0.0;           // for nonnegative observables
    bool pass = false;
};

// Discrete convexity, 1-Lipschitz (scaled by sup_norm), Q(0) = 0, and
// nonnegativity for nonnegative observables, all within the pooled CI.
inline RegularityReport check_pressure_regularity(const PressureCurve& curve,
                                                  bool observable_nonnegative = false) {
    RegularityReport rep;
    const std::vector<double>& b = curve.beta_grid;
    const std::vector<double>& q = curve.q_hat;
    const std::vector<double>& ci = curve.ci;
    const std::size_t n = b.size();

    rep.q0_exact_zero = true;
    for (std::size_t i = 0; i < n; ++i)
        if (b[i] == 0.0 && q[i] != 0.0) rep.q0_exact_zero = false;

    const double eps = 1e-10 * std::max(1.0, curve.sup_norm);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double s_prev = (q[i] - q[i - 1]) / (b[i] - b[i - 1]);
        const double s_next = (q[i + 1] - q[i]) / (b[i + 1] - b[i]);
        const double slack = (ci[i - 1] + ci[i]) / (b[i] - b[i - 1]) +
                             (ci[i] + ci[i + 1]) / (b[i + 1] - b[i]);
        rep.worst_convexity_violation =
            std::max(rep.worst_convexity_violation, (s_prev - s_next) - slack - eps);
    }

    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double lhs = std::fabs(q[j] - q[i]);
            const double rhs = (b[j] - b[i]) * curve.sup_norm + ci[i] + ci[j];
            rep.worst_lipschitz_violation =
                std::max(rep.worst_lipschitz_violation, lhs - rhs - eps);
        }

    // beta psi is a nonnegative potential only on the beta >= 0 half
    if (observable_nonnegative)
        for (std::size_t i = 0; i < n; ++i)
            if (b[i] >= 0.0)
                rep.worst_negativity = std::max(rep.worst_negativity, -(q[i] + ci[i] + eps));

    rep.pass = rep.q0_exact_zero && rep.worst_convexity_violation <= 0.0 &&
               rep.worst_lipschitz_violation <= 0.0 && rep.worst_negativity <= 0.0;
    return rep;
}

}  // namespace nlwlab

#endif
