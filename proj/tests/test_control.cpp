#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "nlwlab/control.hpp"

using namespace nlwlab;

namespace {
const double kPi = 3.14159265358979323846;
}

TEST_CASE("steady state: trivial roots and the diagonal linear solve") {
    SpectralDomain d = build_domain(kPi, 6);

    Field h0(d.n_modes);
    Field v = solve_steady_state(d, make_klein_gordon(1.0, 0.0), h0);
    for (std::size_t j = 0; j < d.n_modes; ++j) CHECK(v[j] == Catch::Approx(0.0).margin(1e-12));

    Field h(d.n_modes);
    h[0] = 0.7;
    h[2] = -0.4;
    Field vlin = solve_steady_state(d, make_zero_nonlinearity(), h);
    for (std::size_t j = 0; j < d.n_modes; ++j)
        CHECK(vlin[j] == Catch::Approx(h[j] / d.eigenvalues[j]).margin(1e-12));
}

TEST_CASE("steady state: sine-Gordon residual below 1e-10") {
    SpectralDomain d = build_domain(kPi, 8);
    Field h(d.n_modes);
    h[0] = 0.5;
    h[1] = -0.3;
    h[3] = 0.2;
    Nonlinearity sg = make_sine_gordon();
    Field v = solve_steady_state(d, sg, h);

    Collocation colloc(d);
    std::vector<double> vals = colloc.to_collocation(v);
    for (double& x : vals) x = sg.f(x);
    Field fs = colloc.from_collocation(vals);
    double res = 0.0;
    for (std::size_t j = 0; j < d.n_modes; ++j) {
        const double r = d.eigenvalues[j] * v[j] + fs[j] - h[j];
        res += r * r;
    }
    CHECK(std::sqrt(res) <= 1e-10);
}

TEST_CASE("control blend endpoints are exact") {
    SpectralDomain d = build_domain(kPi, 4);
    Field h(d.n_modes);
    h[0] = 0.3;
    Nonlinearity sg = make_sine_gordon();
    Field vhat = solve_steady_state(d, sg, h);

    State target(d.n_modes);
    target.position[0] = 0.8;
    target.position[1] = -0.2;
    target.velocity[0] = 0.5;
    target.velocity[2] = -0.4;

    ControlPath path = control_to_target(d, sg, 0.5, h, vhat, target);
    State start = path.blend(0.0);
    for (std::size_t j = 0; j < d.n_modes; ++j) {
        CHECK(start.position[j] == Catch::Approx(vhat[j]).margin(1e-14));
        CHECK(start.velocity[j] == Catch::Approx(0.0).margin(1e-14));
    }
    State end = path.blend(1.0);
    for (std::size_t j = 0; j < d.n_modes; ++j) {
        CHECK(end.position[j] == Catch::Approx(target.position[j]).margin(1e-14));
        CHECK(end.velocity[j] == Catch::Approx(target.velocity[j]).margin(1e-14));
    }
}

TEST_CASE("control replay reaches the target within 1e-8") {
    SpectralDomain d = build_domain(kPi, 4);
    NormParams p{default_alpha(0.5, d), 0.0};
    Field h(d.n_modes);
    h[0] = 0.3;

    SECTION("f = 0: per-mode closed-form control replays exactly") {
        Nonlinearity z = make_zero_nonlinearity();
        Field vhat = solve_steady_state(d, z, h);
        State target(d.n_modes);
        target.position[1] = 1.0;
        target.velocity[0] = -0.6;
        ControlPath path = control_to_target(d, z, 0.5, h, vhat, target);
        ControlReport rep = replay_control(path, d, z, 0.5, h, p);
        CHECK(std::sqrt(rep.endpoint_error_sq) <= 1e-8);
    }

    SECTION("sine-Gordon: random smooth target") {
        Nonlinearity sg = make_sine_gordon();
        Field vhat = solve_steady_state(d, sg, h);
        State target(d.n_modes);
        target.position[0] = 0.9;
        target.position[2] = 0.4;
        target.velocity[1] = -0.7;
        ControlPath path = control_to_target(d, sg, 0.5, h, vhat, target);
        ControlReport rep = replay_control(path, d, sg, 0.5, h, p);
        CHECK(std::sqrt(rep.endpoint_error_sq) <= 1e-8);
    }

    SECTION("returning to the rest state reproduces it") {
        Nonlinearity sg = make_sine_gordon();
        Field vhat = solve_steady_state(d, sg, h);
        State target(vhat, Field(d.n_modes));
        ControlPath path = control_to_target(d, sg, 0.5, h, vhat, target);
        ControlReport rep = replay_control(path, d, sg, 0.5, h, p);
        CHECK(std::sqrt(rep.endpoint_error_sq) <= 1e-8);
    }
}

TEST_CASE("feedback stabilisation decays and improves with N") {
    SpectralDomain d = build_domain(kPi, 8);
    NormParams p{default_alpha(0.5, d), 0.0};
    Field h(d.n_modes);
    h[0] = 0.2;
    Nonlinearity sg = make_sine_gordon();
    Field vhat = solve_steady_state(d, sg, h);

    State start(d.n_modes);
    for (std::size_t j = 0; j < d.n_modes; ++j)
        start.position[j] = vhat[j] + 1.2 / static_cast<double>(j + 1);

    SECTION("start at target stays at target") {
        State at(vhat, Field(d.n_modes));
        StabilizeReport rep = feedback_stabilize(d, sg, 0.5, h, at, vhat, 4, 5.0, p);
        for (double v : rep.diff_sq) CHECK(v <= 1e-20);
    }

    SECTION("f = 0 decays at the linear rate for any N") {
        Nonlinearity z = make_zero_nonlinearity();
        Field v0 = solve_steady_state(d, z, h);
        State away(d.n_modes);
        away.position[0] = v0[0] + 2.0;
        StabilizeReport rep = feedback_stabilize(d, z, 0.5, h, away, v0, 0, 20.0, p);
        CHECK(rep.bound_ok);
    }

    SECTION("rate approaches alpha from below as N grows") {
        double prev_rate = -1e9;
        bool last_ok = false;
        for (std::size_t N : {std::size_t{0}, std::size_t{2}, std::size_t{4}, std::size_t{8}}) {
            StabilizeReport rep = feedback_stabilize(d, sg, 0.5, h, start, vhat, N, 20.0, p);
            INFO("N=" << N << " rate " << rep.rate_hat << " bound_ok " << rep.bound_ok);
            CHECK(rep.rate_hat >= prev_rate - 0.05 * std::fabs(prev_rate) - 1e-6);
            prev_rate = std::max(prev_rate, rep.rate_hat);
            last_ok = rep.bound_ok;
        }
        CHECK(last_ok);
        CHECK(prev_rate >= p.alpha * 0.99);
    }
}
