#ifndef NLWLAB_NOISE_HPP
#define NLWLAB_NOISE_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "nlwlab/rng.hpp"
#include "nlwlab/spectral.hpp"

namespace nlwlab {

// Per-mode white-noise amplitudes b_j (all positive on retained modes) with the
// derived sums B = sum b_j^2 and B1 = sum lambda_j b_j^2.
struct NoiseSpec {
    std::vector<double> b;
    double B = 0.0;
    double B1 = 0.0;

    bool degenerate() const {
        for (double x : b)
            if (!(x > 0.0)) return true;
        return false;
    }
};

inline NoiseSpec make_noise(const SpectralDomain& d, std::vector<double> b) {
    if (b.size() != d.n_modes)
        throw std::invalid_argument("make_noise: amplitude count != mode count");
    NoiseSpec ns;
    ns.b = std::move(b);
    for (std::size_t j = 0; j < d.n_modes; ++j) {
        ns.B += ns.b[j] * ns.b[j];
        ns.B1 += d.eigenvalues[j] * ns.b[j] * ns.b[j];
    }
    return ns;
}

// default decay profile b_j = b0 * j^{-decay}; decay 1.5 keeps B1 summable
// against lambda_j ~ j^2 growth at any truncation
inline NoiseSpec make_power_noise(const SpectralDomain& d, double b0, double decay = 1.5) {
    std::vector<double> b(d.n_modes);
    for (std::size_t j = 0; j < d.n_modes; ++j)
        b[j] = b0 * std::pow(static_cast<double>(j + 1), -decay);
    return make_noise(d, std::move(b));
}

// increment of the noise primitive over dt: independent N(0, b_j^2 dt) per mode
inline Field sample_noise_increment(const NoiseSpec& ns, double dt, RngStream& rng) {
    if (!(dt > 0.0)) throw std::invalid_argument("sample_noise_increment: dt must be positive");
    Field inc(ns.b.size());
    const double sq = std::sqrt(dt);
    for (std::size_t j = 0; j < ns.b.size(); ++j)
        inc[j] = ns.b[j] * sq * rng.next_gaussian();
    return inc;
}

}  // namespace nlwlab

#endif
