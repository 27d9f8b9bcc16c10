#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "nlwlab/dynamics.hpp"
#include "nlwlab/noise.hpp"
#include "nlwlab/stats.hpp"
#include "oracles.hpp"

using namespace nlwlab;

namespace {
const double kPi = 3.14159265358979323846;

SpectralDomain domain8() { return build_domain(kPi, 8); }

NoiseSpec no_noise(const SpectralDomain& d) {
    return make_noise(d, std::vector<double>(d.n_modes, 0.0));
}
}  // namespace

TEST_CASE("mode flow covariance matches the quadrature oracle") {
    // the one-step noise injection is L L^T; compare against brute-force
    // integration of the Ito covariance for several regimes (under-, over-,
    // near-critically damped)
    struct Case {
        double lambda, gamma, b, tau;
    };
    for (const Case& c : {Case{1.0, 0.5, 0.8, 0.05}, Case{25.0, 0.5, 0.3, 0.02},
                          Case{1.0, 4.0, 1.2, 0.1}, Case{4.0, 4.0, 0.7, 0.05}}) {
        ModeFlow m = make_mode_flow(c.lambda, c.gamma, c.b, 0.0, c.tau);
        const double q11 = m.l11 * m.l11;
        const double q12 = m.l21 * m.l11;
        const double q22 = m.l21 * m.l21 + m.l22 * m.l22;
        oracle::Mat2 q = oracle::convolution_covariance(c.lambda, c.gamma, c.b, c.tau);
        CHECK(q11 == Catch::Approx(q[0]).epsilon(1e-7).margin(1e-14));
        CHECK(q12 == Catch::Approx(q[1]).epsilon(1e-7).margin(1e-14));
        CHECK(q22 == Catch::Approx(q[3]).epsilon(1e-7).margin(1e-14));

        // and the deterministic part matches the series exponential
        oracle::Mat2 phi = oracle::expm(oracle::damped_wave_generator(c.lambda, c.gamma), c.tau);
        CHECK(m.phi11 == Catch::Approx(phi[0]).margin(1e-12));
        CHECK(m.phi12 == Catch::Approx(phi[1]).margin(1e-12));
        CHECK(m.phi21 == Catch::Approx(phi[2]).margin(1e-12));
        CHECK(m.phi22 == Catch::Approx(phi[3]).margin(1e-12));
    }
}

TEST_CASE("free flow is exact per mode to 1e-10 over many steps") {
    SpectralDomain d = domain8();
    SimParams sp;
    sp.gamma = 0.5;
    sp.dt = 0.05;
    sp.t_final = 10.0;
    Stepper stepper(d, make_zero_nonlinearity(), no_noise(d), sp);

    State st(d.n_modes);
    for (std::size_t j = 0; j < d.n_modes; ++j) {
        st.position[j] = 1.0 / static_cast<double>(j + 1);
        st.velocity[j] = 0.3 * (j % 2 ? -1.0 : 1.0);
    }
    const State initial = st;

    RngStream rng(1, 0);
    const std::size_t n = step_count(sp.t_final, sp.dt);
    for (std::size_t k = 0; k < n; ++k) st = stepper.step(st, rng);

    for (std::size_t j = 0; j < d.n_modes; ++j) {
        oracle::Vec2 ref = oracle::damped_oscillator(d.eigenvalues[j], sp.gamma, 0.0,
                                                     initial.position[j], initial.velocity[j],
                                                     sp.t_final);
        const double scale = std::hypot(ref[0], ref[1]);
        CHECK(std::fabs(st.position[j] - ref[0]) <= 1e-10 * scale);
        CHECK(std::fabs(st.velocity[j] - ref[1]) <= 1e-10 * scale);
    }
}

TEST_CASE("constant forcing shifts the rest point exactly") {
    SpectralDomain d = build_domain(2.0, 3);
    SimParams sp;
    sp.gamma = 0.7;
    sp.dt = 0.02;
    sp.t_final = 5.0;
    sp.h = Field({0.4, -0.2, 0.9});
    Stepper stepper(d, make_zero_nonlinearity(), no_noise(d), sp);

    State st(d.n_modes);
    st.position[0] = 1.0;
    RngStream rng(1, 0);
    const std::size_t n = step_count(sp.t_final, sp.dt);
    for (std::size_t k = 0; k < n; ++k) st = stepper.step(st, rng);

    for (std::size_t j = 0; j < d.n_modes; ++j) {
        oracle::Vec2 ref = oracle::damped_oscillator(d.eigenvalues[j], sp.gamma, sp.h[j],
                                                     j == 0 ? 1.0 : 0.0, 0.0, sp.t_final);
        CHECK(st.position[j] == Catch::Approx(ref[0]).margin(1e-10));
        CHECK(st.velocity[j] == Catch::Approx(ref[1]).margin(1e-10));
    }
}

TEST_CASE("stationary variances match the Lyapunov oracle within 4 standard errors") {
    SpectralDomain d = build_domain(kPi, 4);
    SimParams sp;
    sp.gamma = 0.5;
    sp.dt = 0.1;
    sp.t_final = 40.0;
    NoiseSpec ns = make_power_noise(d, 0.6);
    Stepper stepper(d, make_zero_nonlinearity(), ns, sp);

    const std::size_t M = 4000;
    const std::size_t n = step_count(sp.t_final, sp.dt);
    std::vector<std::vector<double>> u(d.n_modes), v(d.n_modes);
    for (std::size_t i = 0; i < M; ++i) {
        RngStream rng = split_stream(99, i);
        State st(d.n_modes);
        for (std::size_t k = 0; k < n; ++k) st = stepper.step(st, rng);
        for (std::size_t j = 0; j < d.n_modes; ++j) {
            u[j].push_back(st.position[j]);
            v[j].push_back(st.velocity[j]);
        }
    }
    for (std::size_t j = 0; j < d.n_modes; ++j) {
        const double var_u = d.eigenvalues[j] > 0
                                 ? ns.b[j] * ns.b[j] / (2.0 * sp.gamma * d.eigenvalues[j])
                                 : 0.0;
        const double var_v = ns.b[j] * ns.b[j] / (2.0 * sp.gamma);
        const double se_u = var_u * std::sqrt(2.0 / static_cast<double>(M - 1));
        const double se_v = var_v * std::sqrt(2.0 / static_cast<double>(M - 1));
        CHECK(std::fabs(variance(u[j]) - var_u) <= 4.0 * se_u);
        CHECK(std::fabs(variance(v[j]) - var_v) <= 4.0 * se_v);
        CHECK(std::fabs(mean(u[j])) <= 4.0 * std::sqrt(var_u / static_cast<double>(M)));
    }
}

TEST_CASE("noise increments have the right distribution and are reproducible") {
    SpectralDomain d = build_domain(1.0, 3);
    NoiseSpec ns = make_noise(d, {0.5, 0.2, 0.05});
    const double dt = 0.01;

    std::vector<double> draws;
    RngStream rng(5, 0);
    const std::size_t N = 100000;
    for (std::size_t i = 0; i < N; ++i) draws.push_back(sample_noise_increment(ns, dt, rng)[0]);
    const double target = ns.b[0] * ns.b[0] * dt;
    const double se = target * std::sqrt(2.0 / static_cast<double>(N - 1));
    CHECK(std::fabs(variance(draws) - target) <= 4.0 * se);

    NoiseSpec zero = make_noise(d, {0.0, 0.0, 0.0});
    RngStream rng2(5, 1);
    Field inc = sample_noise_increment(zero, dt, rng2);
    for (double c : inc.coeffs) CHECK(c == 0.0);

    RngStream a(42, 7), b(42, 7);
    Field ia = sample_noise_increment(ns, dt, a);
    Field ib = sample_noise_increment(ns, dt, b);
    for (std::size_t j = 0; j < 3; ++j) CHECK(ia[j] == ib[j]);

    CHECK_THROWS_AS(sample_noise_increment(ns, 0.0, rng), std::invalid_argument);
}

TEST_CASE("splitting converges at order >= 1 in the deterministic nonlinear case") {
    SpectralDomain d = build_domain(kPi, 6);
    NormParams p{default_alpha(0.5, d), 0.0};
    State st(d.n_modes);
    st.position[0] = 1.2;
    st.position[2] = -0.7;
    st.velocity[1] = 0.5;

    auto energy_at_T = [&](double dt) {
        SimParams sp;
        sp.gamma = 0.5;
        sp.dt = dt;
        sp.t_final = 2.0;
        Stepper stepper(d, make_sine_gordon(), no_noise(d), sp);
        RngStream rng(1, 0);
        State cur = st;
        const std::size_t n = step_count(sp.t_final, sp.dt);
        for (std::size_t k = 0; k < n; ++k) cur = stepper.step(cur, rng);
        return energy(cur, d, make_sine_gordon(), p);
    };

    const double ref = energy_at_T(1.0 / 1024.0);
    const double e1 = std::fabs(energy_at_T(0.04) - ref);
    const double e2 = std::fabs(energy_at_T(0.02) - ref);
    const double e3 = std::fabs(energy_at_T(0.01) - ref);
    CHECK(e2 <= e1 / 1.8);
    CHECK(e3 <= e2 / 1.8);
}

TEST_CASE("simulate honors t_final = 0, monotone dissipation, observer strides") {
    SpectralDomain d = domain8();
    SimParams sp;
    sp.gamma = 0.5;
    sp.dt = 0.05;
    sp.t_final = 0.0;
    Stepper stepper(d, make_zero_nonlinearity(), no_noise(d), sp);
    State st(d.n_modes);
    st.position[0] = 2.0;
    RngStream rng(1, 0);
    TrajectoryRecord rec = simulate(stepper, st, rng);
    CHECK(rec.n_steps == 0);
    CHECK(rec.final_state.position[0] == 2.0);

    SimParams sp2 = sp;
    sp2.t_final = 8.0;
    Stepper stepper2(d, make_zero_nonlinearity(), no_noise(d), sp2);
    NormParams p{default_alpha(sp.gamma, d), 0.0};
    std::vector<double> energies, t_a, t_b;
    std::vector<Observer> obs;
    obs.push_back(Observer{4, [&](std::size_t, double t, const State& s) {
                               t_a.push_back(t);
                               energies.push_back(energy(s, d, make_zero_nonlinearity(), p));
                           }});
    obs.push_back(Observer{4, [&](std::size_t, double t, const State&) { t_b.push_back(t); }});
    RngStream rng2(1, 1);
    simulate(stepper2, st, rng2, obs);
    REQUIRE(energies.size() > 2);
    for (std::size_t k = 1; k < energies.size(); ++k)
        CHECK(energies[k] <= energies[k - 1] + 1e-12);
    REQUIRE(t_a.size() == t_b.size());
    for (std::size_t k = 0; k < t_a.size(); ++k) CHECK(t_a[k] == t_b[k]);
}

TEST_CASE("identical seeds give bit-identical trajectories") {
    SpectralDomain d = domain8();
    SimParams sp;
    sp.gamma = 0.5;
    sp.dt = 0.02;
    sp.t_final = 3.0;
    NoiseSpec ns = make_power_noise(d, 0.4);
    Stepper stepper(d, make_sine_gordon(), ns, sp);
    State st(d.n_modes);
    st.position[0] = 0.5;

    RngStream r1(123, 9), r2(123, 9);
    State a = st, b = st;
    const std::size_t n = step_count(sp.t_final, sp.dt);
    for (std::size_t k = 0; k < n; ++k) {
        a = stepper.step(a, r1);
        b = stepper.step(b, r2);
    }
    for (std::size_t j = 0; j < d.n_modes; ++j) {
        CHECK(a.position[j] == b.position[j]);
        CHECK(a.velocity[j] == b.velocity[j]);
    }
}

TEST_CASE("divergence is reported with the offending mode") {
    SpectralDomain d = build_domain(1.0, 2);
    SimParams sp;
    sp.gamma = 0.5;
    sp.dt = 1.0;
    sp.t_final = 10.0;
    Stepper stepper(d, make_klein_gordon(1.9, 0.0), no_noise(d), sp);
    State st(d.n_modes);
    st.position[0] = 1e160;
    RngStream rng(1, 0);
    CHECK_THROWS_AS([&] {
        State cur = st;
        for (int k = 0; k < 10; ++k) cur = stepper.step(cur, rng);
    }(), DivergenceError);
}

TEST_CASE("energy functional: zero state, zero kind, quadrature oracle") {
    SpectralDomain d = build_domain(kPi, 5);
    NormParams p{0.3, 0.0};
    Collocation colloc(d);

    CHECK(energy(zero_state(d), d, make_sine_gordon(), p, colloc) == 0.0);

    RngStream rng(77, 0);
    State st(d.n_modes);
    for (auto& c : st.position.coeffs) c = 0.4 * rng.next_gaussian();
    for (auto& c : st.velocity.coeffs) c = 0.4 * rng.next_gaussian();
    CHECK(energy(st, d, make_zero_nonlinearity(), p, colloc) ==
          Catch::Approx(h_norm_sq(st, d, p)).epsilon(1e-13));

    // single mode u = a e_1 against adaptive quadrature of 2 int (1-cos(a e_1))
    State single = zero_state(d);
    single.position[0] = 1.3;
    const double e = energy(single, d, make_sine_gordon(), p, colloc);
    const double base = h_norm_sq(single, d, p);
    const double ref = oracle::adaptive_simpson(
        [&](double x) {
            const double u = 1.3 * std::sqrt(2.0 / d.length) * std::sin(kPi * x / d.length);
            return 1.0 - std::cos(u);
        },
        0.0, d.length);
    CHECK(e - base == Catch::Approx(2.0 * ref).margin(2e-4));
}

TEST_CASE("energy is dominated by C (1 + |u|_H^4) on random states") {
    SpectralDomain d = build_domain(2.0, 6);
    NormParams p{0.3, 0.0};
    Collocation colloc(d);
    RngStream rng(13, 0);

    // 1-D embedding: ||u||_inf^2 <= (L/3) ||u||_1^2 via sum 1/lambda_j <= L^2/6
    const double L = d.length;
    const double lam1 = d.lambda_min();
    auto domination_const = [&](const Nonlinearity& nl) {
        switch (nl.kind) {
            case NonlinearityKind::zero: return 1.0;
            case NonlinearityKind::sine_gordon: return 1.0 + 4.0 * L;
            case NonlinearityKind::klein_gordon:
                return 1.0 +
                       (2.0 / (nl.rho + 2.0)) * std::pow(L / 3.0, 0.5 * nl.rho) / lam1 +
                       std::fabs(nl.lambda) / lam1;
        }
        return 1.0;
    };

    for (const Nonlinearity& nl :
         {make_zero_nonlinearity(), make_sine_gordon(), make_klein_gordon(1.0, 0.5),
          make_klein_gordon(1.5, -1.0)}) {
        const double C = domination_const(nl);
        for (int trial = 0; trial < 300; ++trial) {
            State st(d.n_modes);
            const double scale = trial % 3 == 0 ? 4.0 : 0.7;
            for (auto& c : st.position.coeffs) c = scale * rng.next_gaussian();
            for (auto& c : st.velocity.coeffs) c = scale * rng.next_gaussian();
            const double h = h_norm_sq(st, d, p);
            const double e = energy(st, d, nl, p, colloc);
            CHECK(std::fabs(e) <= C * (1.0 + h * h) * (1.0 + 1e-9));
        }
    }
}

TEST_CASE("weight functionals: base values, ordering, saturation") {
    SpectralDomain d = build_domain(kPi, 4);
    NormParams p{0.25, 0.2};
    Collocation colloc(d);
    Nonlinearity sg = make_sine_gordon();

    EnergyReport zero = weights(zero_state(d), d, sg, p, colloc, 3, 0.7);
    CHECK(zero.energy == 0.0);
    CHECK(zero.weight_w == 1.0);
    CHECK(zero.weight_w_m == 1.0);
    CHECK(zero.weight_wt_m == 2.0);
    CHECK_FALSE(zero.saturated);

    RngStream rng(21, 0);
    for (int trial = 0; trial < 100; ++trial) {
        State st(d.n_modes);
        for (auto& c : st.position.coeffs) c = rng.next_gaussian();
        for (auto& c : st.velocity.coeffs) c = rng.next_gaussian();
        EnergyReport r1 = weights(st, d, sg, p, colloc, 1, 0.3);
        CHECK(r1.weight_w_m == Catch::Approx(r1.weight_w).epsilon(1e-14));
        CHECK(r1.weight_w >= 1.0);
        EnergyReport r3 = weights(st, d, sg, p, colloc, 3, 0.3);
        CHECK(r3.weight_wt_m >= r3.weight_w_m);
    }

    State big(d.n_modes);
    big.position[0] = 40.0;
    EnergyReport sat = weights(big, d, sg, p, colloc, 1, 1.0);
    CHECK(sat.saturated);
    CHECK(std::isfinite(sat.weight_wt_m));

    CHECK_THROWS_AS(weights(zero_state(d), d, sg, p, colloc, 0, 0.1), std::invalid_argument);
}
