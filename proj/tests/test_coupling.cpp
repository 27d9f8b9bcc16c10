#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "nlwlab/coupling.hpp"
#include "nlwlab/mixing.hpp"

using namespace nlwlab;

namespace {
const double kPi = 3.14159265358979323846;

Stepper make_stepper(const SpectralDomain& d, const Nonlinearity& nl, double b0, double dt) {
    SimParams sp;
    sp.gamma = 0.5;
    sp.dt = dt;
    NoiseSpec ns = b0 > 0.0 ? make_power_noise(d, b0)
                            : make_noise(d, std::vector<double>(d.n_modes, 0.0));
    return Stepper(d, nl, ns, sp);
}

State bump_state(const SpectralDomain& d, double amp, int phase = 0) {
    State st(d.n_modes);
    for (std::size_t j = 0; j < d.n_modes; ++j) {
        st.position[j] = amp / static_cast<double>((j + 1) * (j + 1));
        st.velocity[j] = 0.3 * amp * ((j + static_cast<std::size_t>(phase)) % 2 ? -1.0 : 1.0) /
                         static_cast<double>(j + 1);
    }
    return st;
}
}  // namespace

TEST_CASE("identical starts stay identical under shared noise") {
    SpectralDomain d = build_domain(kPi, 6);
    NormParams p{default_alpha(0.5, d), 0.0};
    Stepper stepper = make_stepper(d, make_sine_gordon(), 0.5, 0.02);

    State z = bump_state(d, 1.0);
    CoupledPair pair{z, z, 3, 0};
    RngStream rng(31, 0);
    CoupledTrace tr = run_coupled(stepper, p, pair, 200, 10, rng);
    for (double v : tr.full_diff_sq) CHECK(v == 0.0);
    for (double c : tr.girsanov_cost) CHECK(c == 0.0);
    for (std::size_t j = 0; j < d.n_modes; ++j) {
        CHECK(tr.final.primary.position[j] == tr.final.secondary.position[j]);
        CHECK(tr.final.primary.velocity[j] == tr.final.secondary.velocity[j]);
    }
}

TEST_CASE("N = 0 decouples the drift; f = 0 contracts at the linear rate") {
    SpectralDomain d = build_domain(kPi, 4);
    NormParams p{default_alpha(0.5, d), 0.0};
    Stepper stepper = make_stepper(d, make_zero_nonlinearity(), 0.4, 0.02);

    // with f = 0 the difference obeys the free damped wave equation whatever N
    CoupledPair pair{bump_state(d, 1.0), bump_state(d, -0.5, 1), 0, 0};
    RngStream rng(37, 1);
    const double d0 = h_norm_sq(state_diff(pair.secondary, pair.primary), d, p);
    CoupledTrace tr = run_coupled(stepper, p, pair, 500, 25, rng);
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
        CHECK(tr.full_diff_sq[k] <= std::exp(-p.alpha * tr.times[k]) * d0 * (1.0 + 1e-8));
        CHECK(tr.girsanov_cost[k] == 0.0);
    }
}

TEST_CASE("projected difference obeys the pathwise Foias-Prodi bound") {
    SpectralDomain d = build_domain(kPi, 8);
    NormParams p{default_alpha(0.5, d), 0.0};
    Stepper stepper = make_stepper(d, make_sine_gordon(), 0.5, 0.02);

    for (std::size_t N : {std::size_t{2}, std::size_t{4}, std::size_t{8}}) {
        CoupledPair pair{bump_state(d, 1.5), bump_state(d, -1.0, 1), N, 0};
        RngStream rng(41, N);
        CoupledTrace tr = run_coupled(stepper, p, pair, 1000, 20, rng);
        ProjectedCheckReport rep = foias_prodi_projected_check(tr, p.alpha);
        INFO("N = " << N << " worst ratio " << rep.worst_ratio << " at s=" << rep.worst_s
                    << " t=" << rep.worst_t);
        CHECK(rep.pass);
    }

    // t = s edge: ratio at coincident times stays <= 1
    CoupledPair pair{bump_state(d, 1.0), bump_state(d, 0.2, 1), 4, 0};
    RngStream rng(43, 0);
    CoupledTrace tr = run_coupled(stepper, p, pair, 10, 1, rng);
    for (std::size_t k = 0; k < tr.times.size(); ++k)
        CHECK(tr.proj_diff_sq[k] <= tr.full_diff_sq[k] * (1.0 + 1e-12));
}

TEST_CASE("full-difference check qualifies paths by energy flux and sweeps N") {
    SpectralDomain d = build_domain(kPi, 8);
    NormParams p{default_alpha(0.5, d), 0.0};
    Stepper stepper = make_stepper(d, make_sine_gordon(), 0.4, 0.02);

    std::vector<std::pair<State, State>> starts;
    for (int i = 0; i < 12; ++i)
        starts.emplace_back(bump_state(d, 0.8 + 0.1 * i), bump_state(d, -0.5 - 0.1 * i, 1));

    // generous flux budget so that paths qualify; K roughly the stationary
    // gradient production rate, l the transient allowance
    const double K_flux = 10.0, l_flux = 20.0;
    NStarSweep sweep = estimate_n_star(stepper, p, starts, {0, 2, 4, 8}, 0.5, K_flux, l_flux,
                                       10.0, 10, 47, 0, 2);
    REQUIRE(sweep.per_level.size() == 4);
    CHECK(sweep.per_level.back().n_qualifying > 0);
    // at N = n_modes the drift removes the whole nonlinear difference, so the
    // contraction must hold on every qualifying path
    CHECK(sweep.per_level.back().holding_fraction() == 1.0);
    CHECK(sweep.found);

    // monotonicity in eps: larger slack cannot need a larger N
    NStarSweep tighter = estimate_n_star(stepper, p, starts, {0, 2, 4, 8}, 0.1, K_flux, l_flux,
                                         10.0, 10, 47, 0, 2);
    if (tighter.found) CHECK(sweep.n_star <= tighter.n_star);
}

TEST_CASE("girsanov ledger: zero drift cases, monotonicity, window additivity") {
    SpectralDomain d = build_domain(kPi, 6);
    NormParams p{default_alpha(0.5, d), 0.0};

    // f = 0: no drift, no cost
    Stepper lin = make_stepper(d, make_zero_nonlinearity(), 0.4, 0.02);
    CoupledPair pair0{bump_state(d, 1.0), bump_state(d, -1.0, 1), 3, 0};
    RngStream rng(53, 0);
    CoupledTrace tr0 = run_coupled(lin, p, pair0, 200, 10, rng);
    CHECK(girsanov_cost(tr0, 0.0, tr0.times.back()).cost == 0.0);

    Stepper sg = make_stepper(d, make_sine_gordon(), 0.4, 0.02);
    CoupledPair pair{bump_state(d, 1.5), bump_state(d, -1.0, 1), 4, 0};
    RngStream rng2(53, 1);
    CoupledTrace tr = run_coupled(sg, p, pair, 400, 5, rng2);
    for (std::size_t k = 1; k < tr.girsanov_cost.size(); ++k)
        CHECK(tr.girsanov_cost[k] >= tr.girsanov_cost[k - 1]);

    const double t_mid = tr.times[tr.times.size() / 2];
    const double t_end = tr.times.back();
    const double whole = girsanov_cost(tr, 0.0, t_end).cost;
    const double first = girsanov_cost(tr, 0.0, t_mid).cost;
    const double second = girsanov_cost(tr, t_mid, t_end).cost;
    CHECK(whole == Catch::Approx(first + second).epsilon(1e-12));
    CHECK(whole > 0.0);

    GirsanovLedger ledger = girsanov_cost(tr, 0.0, t_end);
    CHECK(ledger.tv_surrogate() >= 0.0);
    CHECK(ledger.tv_surrogate() <= 1.0);

    // refinement invariance of the quadrature within tolerance
    Stepper sg_fine = make_stepper(d, make_sine_gordon(), 0.4, 0.01);
    CoupledPair pair_f{bump_state(d, 1.5), bump_state(d, -1.0, 1), 4, 0};
    RngStream rng3(53, 1);
    CoupledTrace tr_f = run_coupled(sg_fine, p, pair_f, 800, 10, rng3);
    // different noise discretisation, same drift magnitude scale: costs agree
    // to a few percent
    CHECK(girsanov_cost(tr_f, 0.0, t_end).cost == Catch::Approx(whole).epsilon(0.2));

    // degenerate direction is rejected
    std::vector<double> b(d.n_modes, 0.5);
    b[1] = 0.0;
    SimParams sp;
    sp.gamma = 0.5;
    sp.dt = 0.02;
    Stepper bad(d, make_sine_gordon(), make_noise(d, b), sp);
    CoupledPair pb{bump_state(d, 1.0), bump_state(d, -1.0, 1), 4, 0};
    RngStream rng4(53, 2);
    CHECK_THROWS_AS(step_intermediate(pb, bad, rng4), std::invalid_argument);
}

TEST_CASE("mixing distance: coincident starts sit at the noise floor") {
    SpectralDomain d = build_domain(kPi, 4);
    NormParams p{default_alpha(0.5, d), 0.0};
    Stepper stepper = make_stepper(d, make_sine_gordon(), 0.5, 0.05);
    auto dict = default_mixing_dictionary(d, p, make_sine_gordon());

    State z = bump_state(d, 1.0);
    MixingReport rep = estimate_mixing(stepper, z, z, dict, 300, 6.0, 12, 61, 0, 2);
    for (std::size_t k = 0; k < rep.times.size(); ++k)
        CHECK(rep.distance[k] <= 4.0 * rep.noise_floor[k] + 1e-12);
}

TEST_CASE("mixing rate: linear case recovers the spectral gap gamma/2") {
    SpectralDomain d = build_domain(kPi, 4);
    NormParams p{default_alpha(0.5, d), 0.0};
    Stepper stepper = make_stepper(d, make_zero_nonlinearity(), 0.5, 0.05);
    auto dict = default_mixing_dictionary(d, p, make_zero_nonlinearity());

    State z = bump_state(d, 2.0);
    State zp = bump_state(d, -2.0, 1);
    MixingReport rep = estimate_mixing(stepper, z, zp, dict, 6000, 18.0, 36, 67, 0, 2);
    REQUIRE(rep.ok);
    CHECK(rep.kappa_hat == Catch::Approx(0.25).epsilon(0.25));

    // symmetry within Monte Carlo error
    MixingReport swapped = estimate_mixing(stepper, zp, z, dict, 6000, 18.0, 36, 71, 0, 2);
    REQUIRE(swapped.ok);
    for (std::size_t k = 0; k < rep.times.size(); ++k)
        CHECK(std::fabs(rep.distance[k] - swapped.distance[k]) <=
              5.0 * (rep.noise_floor[k] + swapped.noise_floor[k]) + 1e-12);
}
