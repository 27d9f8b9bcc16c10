#ifndef NLWLAB_NONLINEARITY_HPP
#define NLWLAB_NONLINEARITY_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace nlwlab {

enum class NonlinearityKind { zero, sine_gordon, klein_gordon };

// Nonlinear term f with primitive F (F(0)=0), plus the constants C, nu of the
// growth/dissipativity conditions it is configured to satisfy:
//   |f''(u)| <= C(|u|^{rho-1} + 1)
//   F(u)     >= C^{-1}|f'(u)|^{(rho+2)/rho} - nu u^2 - C
//   f(u)u - F(u) >= -nu u^2 - C
// nu must stay below (lambda_1 ^ gamma)/8; that cross-field constraint is
// enforced by the config layer.
struct Nonlinearity {
    NonlinearityKind kind = NonlinearityKind::zero;
    double rho = 1.0;     // growth exponent in (0,2)
    double lambda = 0.0;  // linear shift, klein_gordon only
    double cond_C = 40.0;
    double cond_nu = 0.0;

    double f(double u) const {
        switch (kind) {
            case NonlinearityKind::zero: return 0.0;
            case NonlinearityKind::sine_gordon: return std::sin(u);
            case NonlinearityKind::klein_gordon:
                return std::pow(std::fabs(u), rho) * u - lambda * u;
        }
        return 0.0;
    }

    double F(double u) const {
        switch (kind) {
            case NonlinearityKind::zero: return 0.0;
            case NonlinearityKind::sine_gordon: return 1.0 - std::cos(u);
            case NonlinearityKind::klein_gordon:
                return std::pow(std::fabs(u), rho + 2.0) / (rho + 2.0) -
                       0.5 * lambda * u * u;
        }
        return 0.0;
    }

    double f_prime(double u) const {
        switch (kind) {
            case NonlinearityKind::zero: return 0.0;
            case NonlinearityKind::sine_gordon: return std::cos(u);
            case NonlinearityKind::klein_gordon:
                return (rho + 1.0) * std::pow(std::fabs(u), rho) - lambda;
        }
        return 0.0;
    }

    double f_second(double u) const {
        switch (kind) {
            case NonlinearityKind::zero: return 0.0;
            case NonlinearityKind::sine_gordon: return -std::sin(u);
            case NonlinearityKind::klein_gordon: {
                if (u == 0.0) return 0.0;
                const double s = u > 0.0 ? 1.0 : -1.0;
                return rho * (rho + 1.0) * std::pow(std::fabs(u), rho - 1.0) * s;
            }
        }
        return 0.0;
    }
};

inline Nonlinearity make_zero_nonlinearity() { return Nonlinearity{}; }

inline Nonlinearity make_sine_gordon(double cond_C = 40.0, double cond_nu = 0.01) {
    Nonlinearity n;
    n.kind = NonlinearityKind::sine_gordon;
    n.rho = 1.0;  // only used through the s < 1 - rho/2 configuration bound
    n.cond_C = cond_C;
    n.cond_nu = cond_nu;
    return n;
}

inline Nonlinearity make_klein_gordon(double rho, double lambda, double cond_C = 40.0,
                                      double cond_nu = 0.01) {
    if (!(rho > 0.0 && rho < 2.0))
        throw std::invalid_argument("klein_gordon: rho must lie in (0,2)");
    Nonlinearity n;
    n.kind = NonlinearityKind::klein_gordon;
    n.rho = rho;
    n.lambda = lambda;
    n.cond_C = cond_C;
    n.cond_nu = cond_nu;
    return n;
}

// Sweep report for the growth/dissipativity conditions. margin >= 0 means the
// inequality holds at every sampled point; the worst point is recorded so a
// misconfigured constant is easy to diagnose.
struct ConditionReport {
    bool pass = false;
    double growth_margin = 0.0;       // min over u of C(|u|^{rho-1}+1) - |f''(u)|
    double growth_worst_u = 0.0;
    double dissip1_margin = 0.0;      // min of F(u) - C^{-1}|f'|^{(rho+2)/rho} + nu u^2 + C
    double dissip1_worst_u = 0.0;
    double dissip2_margin = 0.0;      // min of f(u)u - F(u) + nu u^2 + C
    double dissip2_worst_u = 0.0;
};

inline ConditionReport check_conditions(const Nonlinearity& nl, double u_min, double u_max,
                                        std::size_t n_samples) {
    if (n_samples < 2) throw std::invalid_argument("check_conditions: need >= 2 samples");
    ConditionReport rep;
    rep.growth_margin = rep.dissip1_margin = rep.dissip2_margin = 1e300;
    const double C = nl.cond_C, nu = nl.cond_nu;
    const double q = (nl.rho + 2.0) / nl.rho;
    for (std::size_t i = 0; i < n_samples; ++i) {
        const double u = u_min + (u_max - u_min) * static_cast<double>(i) /
                                     static_cast<double>(n_samples - 1);
        const double g = C * (std::pow(std::fabs(u), nl.rho - 1.0) + 1.0) -
                         std::fabs(nl.f_second(u));
        if (g < rep.growth_margin) { rep.growth_margin = g; rep.growth_worst_u = u; }

        const double d1 = nl.F(u) -
                          (C > 0.0 ? std::pow(std::fabs(nl.f_prime(u)), q) / C : 1e300) +
                          nu * u * u + C;
        if (d1 < rep.dissip1_margin) { rep.dissip1_margin = d1; rep.dissip1_worst_u = u; }

        const double d2 = nl.f(u) * u - nl.F(u) + nu * u * u + C;
        if (d2 < rep.dissip2_margin) { rep.dissip2_margin = d2; rep.dissip2_worst_u = u; }
    }
    if (C <= 0.0) {
        // degenerate constants always fail the growth bound at some sample
        rep.growth_margin = -1e300;
        rep.growth_worst_u = 0.0;
    }
    rep.pass = rep.growth_margin >= 0.0 && rep.dissip1_margin >= 0.0 &&
               rep.dissip2_margin >= 0.0;
    return rep;
}

}  // namespace nlwlab

#endif
