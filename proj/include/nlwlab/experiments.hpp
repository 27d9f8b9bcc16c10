#ifndef NLWLAB_EXPERIMENTS_HPP
#define NLWLAB_EXPERIMENTS_HPP

#include <chrono>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "nlwlab/config.hpp"
#include "nlwlab/control.hpp"
#include "nlwlab/coupling.hpp"
#include "nlwlab/feynman_kac.hpp"
#include "nlwlab/io.hpp"
#include "nlwlab/legendre.hpp"
#include "nlwlab/mixing.hpp"
#include "nlwlab/pressure.hpp"
#include "nlwlab/tail_rate.hpp"
#include "nlwlab/verifiers.hpp"

namespace nlwlab {

namespace fs = std::filesystem;

struct RunResult {
    int exit_code = 0;  // 0 pass, 1 acceptance failure, 2 config error
    json manifest;
    fs::path manifest_path;
};

namespace exp_detail {

// disjoint stream-id blocks per stage, recorded in the manifest
class StreamLedger {
public:
    uint64_t reserve(const std::string& stage, uint64_t count) {
        const uint64_t base = cursor_;
        cursor_ += count;
        json entry;
        entry["stage"] = stage;
        entry["base"] = base;
        entry["count"] = count;
        blocks_.push_back(entry);
        return base;
    }
    json blocks() const { return blocks_; }

private:
    uint64_t cursor_ = 0;
    json blocks_ = json::array();
};

struct Outputs {
    fs::path dir;
    std::vector<fs::path> files;

    fs::path file(const std::string& name) {
        files.push_back(dir / name);
        return files.back();
    }
};

inline std::vector<double> beta_grid_for(const Observable& obs, double delta,
                                         std::size_t n_side) {
    const double beta0 = delta / (4.0 * std::max(obs.sup_norm, 1e-300));
    std::vector<double> grid;
    for (std::size_t i = 0; i <= 2 * n_side; ++i) {
        const double x = -beta0 + beta0 * static_cast<double>(i) / static_cast<double>(n_side);
        grid.push_back(std::fabs(x) < 1e-15 * beta0 ? 0.0 : x);
    }
    return grid;
}

inline void write_pressure_csv(Outputs& out, const std::string& name,
                               const PressureCurve& curve) {
    std::vector<std::string> header{"beta", "q_hat", "ci", "ess"};
    if (curve.has_alt) {
        header.push_back("q_hat_alt");
        header.push_back("ci_alt");
    }
    CsvWriter csv(out.file("pressure_" + name + ".csv"), header);
    for (std::size_t i = 0; i < curve.beta_grid.size(); ++i) {
        std::vector<double> row{curve.beta_grid[i], curve.q_hat[i], curve.ci[i], curve.ess[i]};
        if (curve.has_alt) {
            row.push_back(curve.q_hat_alt[i]);
            row.push_back(curve.ci_alt[i]);
        }
        csv.row(row);
    }
}

inline void write_rate_csv(Outputs& out, const std::string& name, const RateFunction& rf) {
    CsvWriter csv(out.file("rate_" + name + ".csv"), {"p", "i_hat"});
    for (std::size_t i = 0; i < rf.p_grid.size(); ++i)
        csv.row({rf.p_grid[i], rf.i_hat[i]});
}

}  // namespace exp_detail

// ---- simulate ----

inline int run_simulate(const ExperimentConfig& cfg, exp_detail::Outputs& out,
                        exp_detail::StreamLedger& streams, unsigned /*workers*/, json& summary) {
    const json& ex = cfg.experiment;
    std::vector<std::string> errs;
    detail::check_keys(ex, "experiment(simulate)",
                       {"kind", "sample_stride", "m", "kappa", "initial"}, errs);
    if (!errs.empty()) throw ConfigError(std::move(errs));

    const std::size_t stride = detail::get_or<std::size_t>(ex, "sample_stride", 10);
    const unsigned m = detail::get_or<unsigned>(ex, "m", 1);
    InitialSpec init = detail::parse_initial(ex.contains("initial") ? ex["initial"] : json(),
                                             "experiment.initial", errs);
    if (!errs.empty()) throw ConfigError(std::move(errs));

    SpectralDomain d = cfg.domain();
    NormParams p = cfg.norm_params();
    Stepper stepper = cfg.stepper();
    const double kappa =
        ex.contains("kappa") ? ex["kappa"].get<double>() : default_kappa(stepper.noise(), p);

    CsvWriter csv(out.file("trajectory.csv"),
                  {"t", "u1", "udot1", "h_norm_sq", "hs_norm_sq", "energy", "w", "w_m", "wt_m",
                   "saturated"});
    const Collocation& colloc = stepper.collocation();
    std::vector<Observer> obs;
    obs.push_back(Observer{stride, [&](std::size_t, double t, const State& st) {
                               EnergyReport er = weights(st, d, stepper.nonlinearity(), p,
                                                         colloc, m, kappa);
                               csv.row({t, st.position[0], st.velocity[0],
                                        h_norm_sq(st, d, p), hs_norm_sq(st, d, p), er.energy,
                                        er.weight_w, er.weight_w_m, er.weight_wt_m,
                                        er.saturated ? 1.0 : 0.0});
                           }});
    RngStream rng = split_stream(cfg.seed, streams.reserve("simulate", 1));
    TrajectoryRecord rec = simulate(stepper, init.build(d), rng, obs);
    csv.close();

    summary["n_steps"] = rec.n_steps;
    summary["t_final_effective"] = rec.t_final;
    summary["min_energy"] = rec.min_energy;
    summary["max_energy"] = rec.max_energy;
    return 0;
}

// ---- pressure ----

inline int run_pressure(const ExperimentConfig& cfg, exp_detail::Outputs& out,
                        exp_detail::StreamLedger& streams, unsigned workers, json& summary) {
    const json& ex = cfg.experiment;
    std::vector<std::string> errs;
    detail::check_keys(ex, "experiment(pressure)",
                       {"kind", "observables", "delta", "n_beta", "t", "M", "initial",
                        "initial_alt"},
                       errs);
    const double delta = detail::get_or<double>(ex, "delta", 0.5);
    const std::size_t n_beta = detail::get_or<std::size_t>(ex, "n_beta", 4);
    const double t = detail::get_or<double>(ex, "t", 50.0);
    const std::size_t M = detail::get_or<std::size_t>(ex, "M", 4000);
    InitialSpec init = detail::parse_initial(ex.contains("initial") ? ex["initial"] : json(),
                                             "experiment.initial", errs);
    const bool has_alt = ex.contains("initial_alt");
    InitialSpec init_alt =
        detail::parse_initial(has_alt ? ex["initial_alt"] : json(), "experiment.initial_alt",
                              errs);
    if (!ex.contains("observables") || !ex["observables"].is_array() ||
        ex["observables"].empty())
        errs.push_back("experiment(pressure): need a nonempty 'observables' array");
    std::vector<ObservableSpec> specs;
    if (ex.contains("observables") && ex["observables"].is_array())
        for (const json& o : ex["observables"])
            specs.push_back(detail::parse_observable(o, "experiment.observables[]", errs));
    if (!errs.empty()) throw ConfigError(std::move(errs));

    SpectralDomain d = cfg.domain();
    NormParams p = cfg.norm_params();
    Stepper stepper = cfg.stepper();
    std::vector<Observable> observables;
    for (const ObservableSpec& s : specs) observables.push_back(s.build(d, p));

    OccupationSample sample = sample_occupation_integrals(
        stepper, init.build(d), observables, t, M,
        cfg.seed, streams.reserve("pressure", M), workers);
    OccupationSample sample_alt;
    if (has_alt)
        sample_alt = sample_occupation_integrals(stepper, init_alt.build(d), observables, t, M,
                                                 cfg.seed, streams.reserve("pressure_alt", M),
                                                 workers);

    int exit_code = 0;
    json per_obs = json::array();
    for (std::size_t k = 0; k < observables.size(); ++k) {
        const Observable& obs = observables[k];
        const std::vector<double> grid = exp_detail::beta_grid_for(obs, delta, n_beta);
        PressureCurve curve = estimate_pressure_from_sample(sample, k, obs, grid, delta);
        if (has_alt) {
            PressureCurve alt = estimate_pressure_from_sample(sample_alt, k, obs, grid, delta);
            curve.q_hat_alt = alt.q_hat;
            curve.ci_alt = alt.ci;
            curve.has_alt = true;
        }
        exp_detail::write_pressure_csv(out, obs.name, curve);

        RateFunction rf = legendre(curve.beta_grid, curve.q_hat);
        exp_detail::write_rate_csv(out, obs.name, rf);

        const bool nonneg = specs[k].kind == "quad_mode" ||
                            (specs[k].kind == "constant" && specs[k].value >= 0.0);
        RegularityReport reg = check_pressure_regularity(curve, nonneg);
        IntervalReport interval = admissible_interval(curve);

        json entry;
        entry["observable"] = obs.name;
        entry["sup_norm"] = obs.sup_norm;
        entry["beta0"] = delta / (4.0 * std::max(obs.sup_norm, 1e-300));
        entry["occupation_mean"] = curve.occupation_mean;
        entry["high_variance"] = curve.high_variance;
        entry["regularity_pass"] = reg.pass;
        entry["convexity_violation"] = reg.worst_convexity_violation;
        entry["lipschitz_violation"] = reg.worst_lipschitz_violation;
        entry["interval"] = {interval.lo, interval.hi};
        entry["interval_degenerate"] = interval.degenerate_constant;
        entry["interval_contains_mean"] = interval.contains_mean;
        entry["rate_argmin"] = rf.argmin;
        if (!reg.pass) exit_code = 1;
        if (!interval.degenerate_constant && !interval.contains_mean) exit_code = 1;
        per_obs.push_back(entry);
    }
    summary["observables"] = per_obs;
    summary["t"] = sample.t;
    summary["M"] = M;
    summary["delta"] = delta;
    return exit_code;
}

// ---- ldp (tail-rate vs Legendre pipeline) ----

inline int run_ldp(const ExperimentConfig& cfg, exp_detail::Outputs& out,
                   exp_detail::StreamLedger& streams, unsigned workers, json& summary) {
    const json& ex = cfg.experiment;
    std::vector<std::string> errs;
    detail::check_keys(ex, "experiment(ldp)",
                       {"kind", "observable", "delta", "t_pressure", "M_pressure", "o",
                        "t_grid", "M_tail", "initial", "initial_alt", "rel_tolerance",
                        "min_hits"},
                       errs);
    if (!ex.contains("observable")) errs.push_back("experiment(ldp): missing 'observable'");
    ObservableSpec ospec = detail::parse_observable(
        ex.contains("observable") ? ex["observable"] : json::object(), "experiment.observable",
        errs);
    const double delta = detail::get_or<double>(ex, "delta", 0.5);
    const double t_pressure = detail::get_or<double>(ex, "t_pressure", 50.0);
    const std::size_t M_pressure = detail::get_or<std::size_t>(ex, "M_pressure", 4000);
    const std::size_t M_tail = detail::get_or<std::size_t>(ex, "M_tail", 100000);
    const double rel_tol = detail::get_or<double>(ex, "rel_tolerance", 0.15);
    const std::size_t min_hits = detail::get_or<std::size_t>(ex, "min_hits", 50);
    std::vector<double> t_grid = detail::get_or<std::vector<double>>(ex, "t_grid", {});
    if (t_grid.empty()) errs.push_back("experiment(ldp): missing 't_grid'");
    OpenSet O;
    if (ex.contains("o") && ex["o"].is_array())
        for (const json& iv : ex["o"])
            O.intervals.emplace_back(iv.at(0).get<double>(), iv.at(1).get<double>());
    if (O.intervals.empty()) errs.push_back("experiment(ldp): missing open set 'o'");
    InitialSpec init = detail::parse_initial(ex.contains("initial") ? ex["initial"] : json(),
                                             "experiment.initial", errs);
    InitialSpec init_alt = detail::parse_initial(
        ex.contains("initial_alt") ? ex["initial_alt"] : json(), "experiment.initial_alt", errs);
    if (!errs.empty()) throw ConfigError(std::move(errs));

    SpectralDomain d = cfg.domain();
    NormParams p = cfg.norm_params();
    Stepper stepper = cfg.stepper();
    Observable psi = ospec.build(d, p);

    // Legendre side
    const std::vector<double> grid = exp_detail::beta_grid_for(psi, delta, 6);
    PressureCurve curve = estimate_pressure(stepper, init.build(d), psi, grid, t_pressure,
                                            M_pressure, cfg.seed,
                                            streams.reserve("ldp_pressure", M_pressure),
                                            workers, delta);
    exp_detail::write_pressure_csv(out, psi.name, curve);
    const std::vector<double> q_convex = convexify(curve.beta_grid, curve.q_hat);
    RateFunction rf = legendre(curve.beta_grid, curve.q_hat);
    exp_detail::write_rate_csv(out, psi.name, rf);

    double inf_rate = 1e300;
    for (const auto& [a, b] : O.intervals)
        inf_rate = std::min(inf_rate, rate_inf_on_interval(curve.beta_grid, q_convex, a, b));

    // tail side, both initial conditions
    TailRateReport tail1 = empirical_tail_rate(stepper, init.build(d), psi, O, t_grid, M_tail,
                                               cfg.seed, streams.reserve("ldp_tail", M_tail),
                                               workers, min_hits);
    TailRateReport tail2 = empirical_tail_rate(stepper, init_alt.build(d), psi, O, t_grid,
                                               M_tail, cfg.seed,
                                               streams.reserve("ldp_tail_alt", M_tail), workers,
                                               min_hits);
    int idx = 0;
    for (const TailRateReport* tail : {&tail1, &tail2}) {
        CsvWriter csv(out.file("tail_" + std::to_string(idx++) + ".csv"),
                      {"t", "hits", "log_p", "se_log_p"});
        for (std::size_t i = 0; i < tail->times.size(); ++i)
            csv.row({tail->times[i], static_cast<double>(tail->hits[i]), tail->log_p[i],
                     tail->se_log_p[i]});
    }

    const double z = quantile_normal_975();
    const double pooled_rate = 0.5 * (-tail1.slope - tail2.slope);
    const double rel_err = std::fabs(pooled_rate - inf_rate) / std::max(inf_rate, 1e-12);
    const bool ic_agree = std::fabs(tail1.slope - tail2.slope) <=
                          z * (tail1.slope_se + tail2.slope_se) + 0.1 * inf_rate;
    const bool ok = tail1.ok && tail2.ok && rel_err <= rel_tol && ic_agree;

    summary["inf_rate_legendre"] = inf_rate;
    summary["tail_rate_pooled"] = pooled_rate;
    summary["tail_rate_1"] = -tail1.slope;
    summary["tail_rate_2"] = -tail2.slope;
    summary["tail_se_1"] = tail1.slope_se;
    summary["tail_se_2"] = tail2.slope_se;
    summary["relative_discrepancy"] = rel_err;
    summary["ic_agree"] = ic_agree;
    summary["inconclusive_zero_hits"] =
        tail1.inconclusive_zero_hits || tail2.inconclusive_zero_hits;
    return ok ? 0 : 1;
}

// ---- couple ----

inline int run_couple(const ExperimentConfig& cfg, exp_detail::Outputs& out,
                      exp_detail::StreamLedger& streams, unsigned workers, json& summary) {
    const json& ex = cfg.experiment;
    std::vector<std::string> errs;
    detail::check_keys(ex, "experiment(couple)",
                       {"kind", "task", "n_pairs", "N", "N_list", "T", "eps_list", "K_flux",
                        "l_flux", "amp", "stride", "M", "horizon", "n_grid", "dict_low_modes",
                        "initial", "initial_alt", "window"},
                       errs);
    const std::string task = detail::get_or<std::string>(ex, "task", "fp");
    if (!errs.empty()) throw ConfigError(std::move(errs));

    SpectralDomain d = cfg.domain();
    NormParams p = cfg.norm_params();
    Stepper stepper = cfg.stepper();

    auto pair_starts = [&](std::size_t n_pairs, double amp) {
        std::vector<std::pair<State, State>> starts;
        for (std::size_t i = 0; i < n_pairs; ++i) {
            InitialSpec a{"bump", amp * (1.0 + 0.04 * static_cast<double>(i)), {}, {}};
            InitialSpec b{"bump", -amp * (0.8 + 0.04 * static_cast<double>(i)), {}, {}};
            starts.emplace_back(a.build(d), b.build(d));
        }
        return starts;
    };

    if (task == "fp") {
        const std::size_t n_pairs = detail::get_or<std::size_t>(ex, "n_pairs", 100);
        const std::size_t N = detail::get_or<std::size_t>(ex, "N", d.n_modes);
        const double T = detail::get_or<double>(ex, "T", 20.0);
        const double amp = detail::get_or<double>(ex, "amp", 1.0);
        const std::size_t stride = detail::get_or<std::size_t>(ex, "stride", 20);
        auto starts = pair_starts(n_pairs, amp);
        const std::size_t n_steps = step_count(T, cfg.dt);
        const uint64_t base = streams.reserve("couple_fp", n_pairs);

        std::vector<ProjectedCheckReport> reports(n_pairs);
        std::vector<double> costs(n_pairs);
        parallel_for(n_pairs, workers, [&](std::size_t i) {
            RngStream rng = split_stream(cfg.seed, base + i);
            CoupledPair pair{starts[i].first, starts[i].second, N, rng.stream_id()};
            CoupledTrace tr = run_coupled(stepper, p, pair, n_steps, stride, rng);
            reports[i] = foias_prodi_projected_check(tr, p.alpha);
            costs[i] = tr.girsanov_cost.back();
        });
        CsvWriter csv(out.file("foias_prodi.csv"),
                      {"pair", "worst_ratio", "worst_s", "worst_t", "pass", "girsanov_cost"});
        bool all_pass = true;
        double worst = 0.0;
        for (std::size_t i = 0; i < n_pairs; ++i) {
            csv.row({static_cast<double>(i), reports[i].worst_ratio, reports[i].worst_s,
                     reports[i].worst_t, reports[i].pass ? 1.0 : 0.0, costs[i]});
            all_pass = all_pass && reports[i].pass;
            worst = std::max(worst, reports[i].worst_ratio);
        }
        summary["task"] = "fp";
        summary["worst_ratio"] = worst;
        summary["all_pass"] = all_pass;
        return all_pass ? 0 : 1;
    }

    if (task == "nstar") {
        const std::size_t n_pairs = detail::get_or<std::size_t>(ex, "n_pairs", 64);
        const double T = detail::get_or<double>(ex, "T", 10.0);
        const double amp = detail::get_or<double>(ex, "amp", 1.0);
        const double K_flux = detail::get_or<double>(ex, "K_flux", 10.0);
        const double l_flux = detail::get_or<double>(ex, "l_flux", 20.0);
        std::vector<double> eps_list =
            detail::get_or<std::vector<double>>(ex, "eps_list", {0.1, 0.5, 1.0});
        std::vector<std::size_t> levels =
            detail::get_or<std::vector<std::size_t>>(ex, "N_list", {});
        if (levels.empty())
            for (std::size_t N = 0; N <= d.n_modes; N += std::max<std::size_t>(1, d.n_modes / 8))
                levels.push_back(N);
        auto starts = pair_starts(n_pairs, amp);

        json sweeps = json::array();
        bool monotone = true;
        double prev_nstar = 1e300;
        CsvWriter csv(out.file("nstar.csv"),
                      {"eps", "N", "qualifying", "holding", "fraction"});
        for (double eps : eps_list) {
            NStarSweep sweep = estimate_n_star(stepper, p, starts, levels, eps, K_flux, l_flux,
                                               T, 10, cfg.seed,
                                               streams.reserve("couple_nstar", n_pairs),
                                               workers);
            for (const FullCheckResult& res : sweep.per_level)
                csv.row({eps, static_cast<double>(res.coupling_level),
                         static_cast<double>(res.n_qualifying),
                         static_cast<double>(res.n_holding), res.holding_fraction()});
            json entry;
            entry["eps"] = eps;
            entry["found"] = sweep.found;
            entry["n_star"] = sweep.n_star;
            sweeps.push_back(entry);
            if (sweep.found) {
                if (static_cast<double>(sweep.n_star) > prev_nstar) monotone = false;
                prev_nstar = static_cast<double>(sweep.n_star);
            }
        }
        summary["task"] = "nstar";
        summary["sweeps"] = sweeps;
        summary["monotone_in_eps"] = monotone;
        return monotone ? 0 : 1;
    }

    if (task == "mixing") {
        const std::size_t M = detail::get_or<std::size_t>(ex, "M", 4000);
        const double horizon = detail::get_or<double>(ex, "horizon", 15.0);
        const std::size_t n_grid = detail::get_or<std::size_t>(ex, "n_grid", 30);
        const std::size_t n_low = detail::get_or<std::size_t>(ex, "dict_low_modes", 4);
        InitialSpec ia = detail::parse_initial(
            ex.contains("initial") ? ex["initial"] : json{{"kind", "bump"}, {"amp", 2.0}},
            "experiment.initial", errs);
        InitialSpec ib = detail::parse_initial(
            ex.contains("initial_alt") ? ex["initial_alt"]
                                       : json{{"kind", "bump"}, {"amp", -2.0}},
            "experiment.initial_alt", errs);
        if (!errs.empty()) throw ConfigError(std::move(errs));
        auto dict = default_mixing_dictionary(d, p, stepper.nonlinearity(), n_low);
        MixingReport rep = estimate_mixing(stepper, ia.build(d), ib.build(d), dict, M, horizon,
                                           n_grid, cfg.seed,
                                           streams.reserve("couple_mixing", 2 * M), workers);
        CsvWriter csv(out.file("mixing.csv"), {"t", "distance", "noise_floor"});
        for (std::size_t k = 0; k < rep.times.size(); ++k)
            csv.row({rep.times[k], rep.distance[k], rep.noise_floor[k]});
        summary["task"] = "mixing";
        summary["kappa_hat"] = rep.kappa_hat;
        summary["kappa_se"] = rep.kappa_se;
        summary["decay_factor"] = rep.decay_factor;
        summary["fit_ok"] = rep.ok;
        const double z = quantile_normal_975();
        const bool pass = rep.ok && rep.kappa_hat - z * rep.kappa_se > 0.0;
        return pass ? 0 : 1;
    }

    if (task == "girsanov") {
        const std::size_t N = detail::get_or<std::size_t>(ex, "N", d.n_modes);
        const double T = detail::get_or<double>(ex, "T", 10.0);
        const double amp = detail::get_or<double>(ex, "amp", 1.0);
        auto starts = pair_starts(1, amp);
        RngStream rng = split_stream(cfg.seed, streams.reserve("couple_girsanov", 1));
        CoupledPair pair{starts[0].first, starts[0].second, N, rng.stream_id()};
        CoupledTrace tr = run_coupled(stepper, p, pair, step_count(T, cfg.dt), 10, rng);
        CsvWriter csv(out.file("girsanov.csv"),
                      {"t", "cost", "tv_surrogate", "proj_diff_sq", "full_diff_sq"});
        for (std::size_t k = 0; k < tr.times.size(); ++k) {
            GirsanovLedger ledger = girsanov_cost(tr, 0.0, tr.times[k]);
            csv.row({tr.times[k], ledger.cost, ledger.tv_surrogate(), tr.proj_diff_sq[k],
                     tr.full_diff_sq[k]});
        }
        summary["task"] = "girsanov";
        summary["final_cost"] = tr.girsanov_cost.back();
        return 0;
    }

    if (task == "control") {
        // steady state, exact control, feedback stabilisation sweep
        const double T_stab = detail::get_or<double>(ex, "T", 20.0);
        std::vector<std::size_t> levels =
            detail::get_or<std::vector<std::size_t>>(ex, "N_list", {});
        if (levels.empty())
            for (std::size_t N = 0; N <= d.n_modes; N += std::max<std::size_t>(1, d.n_modes / 4))
                levels.push_back(N);
        Field h = cfg.sim_params().h.size() ? cfg.sim_params().h : Field(d.n_modes);
        Field vhat = solve_steady_state(d, stepper.nonlinearity(), h);

        State target(d.n_modes);
        target.position[0] = 0.8;
        if (d.n_modes > 2) target.position[2] = 0.4;
        if (d.n_modes > 1) target.velocity[1] = -0.5;
        ControlPath path =
            control_to_target(d, stepper.nonlinearity(), cfg.gamma, h, vhat, target);
        ControlReport ctrl = replay_control(path, d, stepper.nonlinearity(), cfg.gamma, h, p);

        InitialSpec is{"bump", detail::get_or<double>(ex, "amp", 1.2), {}, {}};
        State start = is.build(d);
        for (std::size_t j = 0; j < d.n_modes; ++j) start.position[j] += vhat[j];

        CsvWriter csv(out.file("stabilize.csv"), {"N", "rate_hat", "bound_ok"});
        bool last_ok = false;
        double last_rate = 0.0;
        for (std::size_t N : levels) {
            StabilizeReport rep = feedback_stabilize(d, stepper.nonlinearity(), cfg.gamma, h,
                                                     start, vhat, N, T_stab, p);
            csv.row({static_cast<double>(N), rep.rate_hat, rep.bound_ok ? 1.0 : 0.0});
            last_ok = rep.bound_ok;
            last_rate = rep.rate_hat;
        }
        summary["task"] = "control";
        summary["control_endpoint_error"] = std::sqrt(ctrl.endpoint_error_sq);
        summary["final_rate"] = last_rate;
        summary["final_bound_ok"] = last_ok;
        const bool pass = std::sqrt(ctrl.endpoint_error_sq) <= 1e-8 && last_ok;
        return pass ? 0 : 1;
    }

    throw ConfigError({"experiment(couple): unknown task '" + task + "'"});
}

// ---- eigen ----

inline int run_eigen(const ExperimentConfig& cfg, exp_detail::Outputs& out,
                     exp_detail::StreamLedger& streams, unsigned workers, json& summary) {
    const json& ex = cfg.experiment;
    std::vector<std::string> errs;
    detail::check_keys(ex, "experiment(eigen)",
                       {"kind", "v", "delta", "M", "T", "resample_period", "probes", "psi",
                        "t_check", "M_h", "t_h", "rel_tol", "dump_ensemble", "initial"},
                       errs);
    if (!ex.contains("v")) errs.push_back("experiment(eigen): missing potential 'v'");
    ObservableSpec vspec = detail::parse_observable(
        ex.contains("v") ? ex["v"] : json::object(), "experiment.v", errs);
    const double delta = detail::get_or<double>(ex, "delta", 0.5);
    const std::size_t M = detail::get_or<std::size_t>(ex, "M", 10000);
    const double T = detail::get_or<double>(ex, "T", 40.0);
    const double period = detail::get_or<double>(ex, "resample_period", 1.0);
    const double t_check = detail::get_or<double>(ex, "t_check", 4.0);
    const double t_h = detail::get_or<double>(ex, "t_h", 6.0);
    const std::size_t M_h = detail::get_or<std::size_t>(ex, "M_h", 400);
    const double rel_tol = detail::get_or<double>(ex, "rel_tol", 0.1);
    InitialSpec init = detail::parse_initial(ex.contains("initial") ? ex["initial"] : json(),
                                             "experiment.initial", errs);
    std::vector<ObservableSpec> psi_specs;
    if (ex.contains("psi") && ex["psi"].is_array())
        for (const json& o : ex["psi"])
            psi_specs.push_back(detail::parse_observable(o, "experiment.psi[]", errs));
    std::vector<InitialSpec> probe_specs;
    if (ex.contains("probes") && ex["probes"].is_array())
        for (const json& o : ex["probes"])
            probe_specs.push_back(detail::parse_initial(o, "experiment.probes[]", errs));
    if (!errs.empty()) throw ConfigError(std::move(errs));

    SpectralDomain d = cfg.domain();
    NormParams p = cfg.norm_params();
    Stepper stepper = cfg.stepper();
    PotentialV V = make_potential(vspec.build(d, p), delta);

    const std::size_t n_periods = step_count(T, cfg.dt) / step_count(period, cfg.dt) + 1;
    CloningResult cr = run_cloning(stepper, V, init.build(d), M, T, period, cfg.seed,
                                   streams.reserve("eigen_cloning", (n_periods + 1) * (M + 1)),
                                   workers);

    std::vector<State> mu_sub(cr.ensemble.begin(),
                              cr.ensemble.begin() +
                                  static_cast<long>(std::min<std::size_t>(M, 500)));

    std::vector<State> probes;
    for (const InitialSpec& s : probe_specs) probes.push_back(s.build(d));
    if (probes.empty()) probes.push_back(init.build(d));
    HEstimate h = estimate_h(stepper, V, cr.log_lambda, probes, mu_sub, t_h, M_h, cfg.seed,
                             streams.reserve("eigen_h", (probes.size() + mu_sub.size()) * M_h),
                             workers);

    std::vector<Observable> psi_set{make_constant_observable(1.0)};
    for (const ObservableSpec& s : psi_specs) psi_set.push_back(s.build(d, p));
    EigenRelationReport rel = check_eigen_relation(stepper, V, cr.log_lambda, mu_sub, psi_set,
                                                   t_check,
                                                   cfg.seed,
                                                   streams.reserve("eigen_rel", mu_sub.size()),
                                                   workers);

    CsvWriter hcsv(out.file("h_values.csv"), {"probe", "h", "se"});
    for (std::size_t i = 0; i < h.h_values.size(); ++i)
        hcsv.row({static_cast<double>(i), h.h_values[i], h.se[i]});
    if (detail::get_or<bool>(ex, "dump_ensemble", false)) {
        CsvWriter ecsv(out.file("ensemble.csv"), {"particle", "h_norm_sq", "energy"});
        const Collocation& colloc = stepper.collocation();
        for (std::size_t i = 0; i < cr.ensemble.size(); ++i)
            ecsv.row({static_cast<double>(i), h_norm_sq(cr.ensemble[i], d, p),
                      energy(cr.ensemble[i], d, stepper.nonlinearity(), p, colloc)});
    }

    summary["log_lambda"] = cr.log_lambda;
    summary["log_lambda_se"] = cr.log_lambda_se;
    summary["lambda"] = cr.lambda;
    summary["min_ess"] = cr.min_ess;
    summary["h_normalization"] = h.normalization;
    summary["h_variance_flag"] = h.variance_flag;
    json rel_rows = json::array();
    for (std::size_t k = 0; k < rel.psi_names.size(); ++k) {
        json row;
        row["psi"] = rel.psi_names[k];
        row["lhs"] = rel.lhs[k];
        row["rhs"] = rel.rhs[k];
        row["relative_error"] = rel.relative_error[k];
        rel_rows.push_back(row);
    }
    summary["eigen_relation"] = rel_rows;
    summary["worst_relative_error"] = rel.worst_relative_error;
    return rel.worst_relative_error <= rel_tol ? 0 : 1;
}

// ---- verify ----

inline int run_verify(const ExperimentConfig& cfg, exp_detail::Outputs& out,
                      exp_detail::StreamLedger& streams, unsigned workers, json& summary) {
    const json& ex = cfg.experiment;
    std::vector<std::string> errs;
    detail::check_keys(ex, "experiment(verify)",
                       {"kind", "check", "m", "kappa_exponent", "M", "horizon", "n_grid",
                        "initial", "u_range", "n_samples"},
                       errs);
    const std::string check = detail::get_or<std::string>(ex, "check", "lyapunov");
    const unsigned m = detail::get_or<unsigned>(ex, "m", 1);
    const std::size_t M = detail::get_or<std::size_t>(ex, "M", 1000);
    const double horizon = detail::get_or<double>(ex, "horizon", 30.0);
    const std::size_t n_grid = detail::get_or<std::size_t>(ex, "n_grid", 30);
    InitialSpec init = detail::parse_initial(ex.contains("initial") ? ex["initial"] : json(),
                                             "experiment.initial", errs);
    if (!errs.empty()) throw ConfigError(std::move(errs));

    SpectralDomain d = cfg.domain();
    NormParams p = cfg.norm_params();
    Stepper stepper = cfg.stepper();

    if (check == "conditions") {
        const double u_range = detail::get_or<double>(ex, "u_range", 20.0);
        const std::size_t n_samples = detail::get_or<std::size_t>(ex, "n_samples", 4001);
        ConditionReport rep =
            check_conditions(stepper.nonlinearity(), -u_range, u_range, n_samples);
        summary["check"] = "conditions";
        summary["pass"] = rep.pass;
        summary["growth_margin"] = rep.growth_margin;
        summary["dissip1_margin"] = rep.dissip1_margin;
        summary["dissip2_margin"] = rep.dissip2_margin;
        summary["growth_worst_u"] = rep.growth_worst_u;
        return rep.pass ? 0 : 1;
    }

    if (check == "lyapunov" || check == "energy_moment") {
        LyapunovReport rep;
        const uint64_t base = streams.reserve("verify", M);
        if (check == "lyapunov")
            rep = verify_lyapunov(stepper, p, m, init.build(d), M, horizon, n_grid, cfg.seed,
                                  base, workers, default_kappa(stepper.noise(), p));
        else
            rep = verify_energy_moment(stepper, p, m, init.build(d), M, horizon, n_grid,
                                       cfg.seed, base, workers);
        CsvWriter csv(out.file("verify.csv"), {"t", "mean", "se"});
        for (std::size_t k = 0; k < rep.fit.times.size(); ++k)
            csv.row({rep.fit.times[k], rep.fit.mean_curve[k], rep.fit.se_curve[k]});
        summary["check"] = check;
        summary["m"] = m;
        summary["alpha_hat"] = rep.alpha_hat;
        summary["alpha_se"] = rep.alpha_se;
        summary["c_hat"] = rep.fit.c_hat;
        summary["bound_ok"] = rep.fit.bound_ok;
        summary["status"] = to_string(rep.fit.status);
        return (rep.fit.status == VerifyStatus::pass || rep.fit.status == VerifyStatus::flat)
                   ? 0
                   : 1;
    }

    if (check == "tightness") {
        const double exponent = detail::get_or<double>(ex, "kappa_exponent", 0.5);
        TightnessReport rep =
            verify_exp_tightness(stepper, p, exponent, init.build(d), M, horizon, n_grid,
                                 cfg.seed, streams.reserve("verify_tightness", M), workers);
        CsvWriter csv(out.file("verify.csv"), {"t", "log_moment"});
        for (std::size_t k = 0; k < rep.times.size(); ++k)
            csv.row({rep.times[k], rep.log_moment[k]});
        summary["check"] = "tightness";
        summary["slope_hat"] = rep.slope_hat;
        summary["slope_se"] = rep.slope_se;
        summary["max_residual"] = rep.max_residual;
        summary["saturated"] = rep.saturated;
        summary["status"] = to_string(rep.status);
        return rep.status == VerifyStatus::pass ? 0 : 1;
    }

    throw ConfigError({"experiment(verify): unknown check '" + check + "'"});
}

// ---- dispatch ----

inline RunResult run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir,
                                unsigned workers) {
    const auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(out_dir);
    exp_detail::Outputs out{out_dir, {}};
    exp_detail::StreamLedger streams;
    json summary;

    int code = 0;
    if (cfg.kind == "simulate") code = run_simulate(cfg, out, streams, workers, summary);
    else if (cfg.kind == "pressure") code = run_pressure(cfg, out, streams, workers, summary);
    else if (cfg.kind == "ldp") code = run_ldp(cfg, out, streams, workers, summary);
    else if (cfg.kind == "couple") code = run_couple(cfg, out, streams, workers, summary);
    else if (cfg.kind == "eigen") code = run_eigen(cfg, out, streams, workers, summary);
    else if (cfg.kind == "verify") code = run_verify(cfg, out, streams, workers, summary);
    else throw ConfigError({"unknown experiment kind " + cfg.kind});

    const auto t1 = std::chrono::steady_clock::now();

    RunResult res;
    res.exit_code = code;
    json& man = res.manifest;
    man["tool"] = "nlwlab";
    man["version"] = "0.1.0";
    if (!cfg.canonical.empty()) man["config"] = json::parse(cfg.canonical);
    man["config_hash"] = hex64(fnv1a64_string(cfg.canonical));
    man["seed"] = cfg.seed;
    man["workers"] = workers;
    man["kind"] = cfg.kind;
    man["dt"] = cfg.dt;
    man["dt_stability_bound"] = cfg.dt_stability_bound();
    man["wall_time_s"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count() / 1000.0;
    man["stream_blocks"] = streams.blocks();
    json outs = json::array();
    for (const fs::path& f : out.files) {
        json entry;
        entry["file"] = f.filename().string();
        entry["fnv64"] = hex64(fnv1a64_file(f));
        outs.push_back(entry);
    }
    man["outputs"] = outs;
    man["status"] = code == 0 ? "pass" : "fail";
    man["summary"] = summary;

    res.manifest_path = out_dir / "manifest.json";
    std::ofstream mf(res.manifest_path);
    mf << man.dump(2) << '\n';
    return res;
}

}  // namespace nlwlab

#endif
