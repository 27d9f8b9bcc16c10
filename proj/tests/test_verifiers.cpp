#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "nlwlab/verifiers.hpp"

using namespace nlwlab;

namespace {
const double kPi = 3.14159265358979323846;

Stepper linear_stepper(const SpectralDomain& d, double b0, double dt) {
    SimParams sp;
    sp.gamma = 0.5;
    sp.dt = dt;
    NoiseSpec ns = b0 > 0.0 ? make_power_noise(d, b0)
                            : make_noise(d, std::vector<double>(d.n_modes, 0.0));
    return Stepper(d, make_zero_nonlinearity(), ns, sp);
}
}  // namespace

TEST_CASE("lyapunov verifier recovers the deterministic linear decay rate") {
    SpectralDomain d = build_domain(kPi, 6);
    NormParams p{default_alpha(0.5, d), 0.2};
    Stepper stepper = linear_stepper(d, 0.0, 0.02);

    State big(d.n_modes);
    for (std::size_t j = 0; j < d.n_modes; ++j) big.position[j] = 2.0 / (1.0 + j);

    // deterministic, so one trajectory is the whole ensemble; the slowest
    // decay of the squared norms is the envelope rate gamma (underdamped)
    LyapunovReport rep = verify_lyapunov(stepper, p, 1, big, 1, 60.0, 40, 5, 0, 1);
    CHECK(rep.fit.status == VerifyStatus::pass);
    CHECK(rep.fit.bound_ok);
    CHECK(rep.alpha_hat == Catch::Approx(0.5).epsilon(0.2));
    CHECK(rep.alpha_hat > p.alpha * 0.5);
}

TEST_CASE("lyapunov verifier: stochastic decay regime and stationary flatness") {
    SpectralDomain d = build_domain(kPi, 4);
    NormParams p{default_alpha(0.5, d), 0.2};
    Stepper stepper = linear_stepper(d, 0.3, 0.05);

    State big(d.n_modes);
    big.position[0] = 6.0;
    big.velocity[1] = -4.0;
    LyapunovReport decay = verify_lyapunov(stepper, p, 1, big, 400, 40.0, 30, 11, 0, 2);
    CHECK(decay.fit.status == VerifyStatus::pass);
    CHECK(decay.alpha_hat > 0.0);
    CHECK(decay.fit.c_hat > 0.0);

    // a start statistically close to equilibrium: run one long burn-in first
    RngStream rng(17, 12345);
    State st(d.n_modes);
    for (std::size_t k = 0; k < 4000; ++k) st = stepper.step(st, rng);
    LyapunovReport flat = verify_lyapunov(stepper, p, 1, st, 400, 20.0, 20, 13, 0, 2);
    CHECK((flat.fit.status == VerifyStatus::flat || flat.fit.status == VerifyStatus::pass));
}

TEST_CASE("energy moment verifier: deterministic decay at rate >= k alpha") {
    SpectralDomain d = build_domain(kPi, 4);
    NormParams p{default_alpha(0.5, d), 0.0};
    Stepper stepper = linear_stepper(d, 0.0, 0.02);

    State big(d.n_modes);
    big.position[0] = 3.0;
    big.position[2] = 1.0;
    const unsigned k = 2;
    LyapunovReport rep = verify_energy_moment(stepper, p, k, big, 1, 40.0, 40, 7, 0, 1);
    CHECK(rep.fit.status == VerifyStatus::pass);
    // fitted rate of E^k is k * (norm decay rate) >= k * alpha
    CHECK(rep.fit.rate_hat >= static_cast<double>(k) * p.alpha * 0.95);
}

TEST_CASE("exponential tightness: kappa = 0 gives slope exactly 1") {
    SpectralDomain d = build_domain(kPi, 3);
    NormParams p{default_alpha(0.5, d), 0.2};
    Stepper stepper = linear_stepper(d, 0.4, 0.05);

    State st(d.n_modes);
    TightnessReport rep = verify_exp_tightness(stepper, p, 0.0, st, 50, 10.0, 20, 19, 0, 2);
    CHECK(rep.status == VerifyStatus::pass);
    CHECK(rep.slope_hat == Catch::Approx(1.0).margin(1e-9));
    for (std::size_t i = 1; i < rep.times.size(); ++i)
        CHECK(rep.log_moment[i] == Catch::Approx(rep.times[i]).margin(1e-9));
}

TEST_CASE("exponential tightness: bounded growth from a stationary-ish start") {
    SpectralDomain d = build_domain(kPi, 3);
    NormParams p{default_alpha(0.5, d), 0.2};
    Stepper stepper = linear_stepper(d, 0.4, 0.05);

    RngStream rng(23, 5000);
    State st(d.n_modes);
    for (std::size_t k = 0; k < 2000; ++k) st = stepper.step(st, rng);

    TightnessReport rep = verify_exp_tightness(stepper, p, 0.5, st, 300, 20.0, 20, 29, 0, 2);
    CHECK(rep.status == VerifyStatus::pass);
    CHECK(rep.slope_hat > 0.0);
    CHECK(rep.slope_hat < 5.0);
    // log-moment growth should track the linear fit, no superlinear blow-up
    CHECK(rep.max_residual <= 0.2 * rep.slope_hat * rep.times.back() + 0.5);
}
