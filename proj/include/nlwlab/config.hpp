#ifndef NLWLAB_CONFIG_HPP
#define NLWLAB_CONFIG_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nlwlab/dynamics.hpp"
#include "nlwlab/noise.hpp"
#include "nlwlab/nonlinearity.hpp"
#include "nlwlab/observable.hpp"
#include "nlwlab/spectral.hpp"

namespace nlwlab {

using json = nlohmann::json;

struct ConfigError : std::runtime_error {
    std::vector<std::string> violations;
    explicit ConfigError(std::vector<std::string> v)
        : std::runtime_error(join(v)), violations(std::move(v)) {}

    static std::string join(const std::vector<std::string>& v) {
        std::string s = "invalid config:";
        for (const std::string& x : v) s += "\n  - " + x;
        return s;
    }
};

// Initial-state presets usable everywhere a state is configured.
struct InitialSpec {
    std::string kind = "zero";  // zero | bump | modes
    double amp = 1.0;
    std::vector<double> position;
    std::vector<double> velocity;

    State build(const SpectralDomain& d) const {
        State st(d.n_modes);
        if (kind == "zero") return st;
        if (kind == "bump") {
            for (std::size_t j = 0; j < d.n_modes; ++j)
                st.position[j] = amp / static_cast<double>((j + 1) * (j + 1));
            return st;
        }
        for (std::size_t j = 0; j < d.n_modes && j < position.size(); ++j)
            st.position[j] = position[j];
        for (std::size_t j = 0; j < d.n_modes && j < velocity.size(); ++j)
            st.velocity[j] = velocity[j];
        return st;
    }
};

struct ObservableSpec {
    std::string kind = "tanh_mode";  // tanh_mode | tanh_vel | sin_mode | quad_mode | constant
    std::size_t mode = 1;
    double amp = 1.0;
    double scale = 1.0;
    double cap = 1.0;
    double value = 0.0;  // constant kind

    Observable build(const SpectralDomain& d, const NormParams& p) const {
        if (kind == "constant") return make_constant_observable(value);
        if (kind == "tanh_mode") return make_tanh_mode_observable(d, mode, amp, scale);
        if (kind == "tanh_vel") return make_tanh_velocity_observable(d, p, mode, amp, scale);
        if (kind == "sin_mode") return make_sin_mode_observable(d, mode, amp, scale);
        if (kind == "quad_mode") return make_truncated_quadratic_observable(d, mode, cap, amp);
        throw std::invalid_argument("unknown observable kind " + kind);
    }
};

struct ExperimentConfig {
    // domain
    double length = 3.14159265358979323846;
    std::size_t n_modes = 8;
    // norm
    std::optional<double> alpha;  // default: min(gamma, lambda1/gamma)/4
    double s = 0.25;
    // nonlinearity
    std::string nl_kind = "sine_gordon";
    double rho = 1.0;
    double lambda = 0.0;
    double cond_C = 40.0;
    double cond_nu = 0.01;
    // noise
    double b0 = 0.5;
    double decay = 1.5;
    std::vector<double> b_explicit;
    // sim
    double gamma = 0.5;
    double dt = 0.02;
    double t_final = 10.0;
    std::vector<double> h_modes;
    // experiment
    std::string kind = "simulate";
    json experiment;  // kind-specific block, already strict-checked
    uint64_t seed = 1;
    std::string canonical;  // serialized form of the parsed config, for hashing

    SpectralDomain domain() const { return build_domain(length, n_modes); }

    NormParams norm_params() const {
        SpectralDomain d = domain();
        return NormParams{alpha ? *alpha : default_alpha(gamma, d), s};
    }

    Nonlinearity nonlinearity() const {
        Nonlinearity nl;
        if (nl_kind == "zero") nl = make_zero_nonlinearity();
        else if (nl_kind == "sine_gordon") nl = make_sine_gordon(cond_C, cond_nu);
        else nl = make_klein_gordon(rho, lambda, cond_C, cond_nu);
        return nl;
    }

    NoiseSpec noise() const {
        SpectralDomain d = domain();
        if (!b_explicit.empty()) return make_noise(d, b_explicit);
        if (b0 == 0.0) return make_noise(d, std::vector<double>(d.n_modes, 0.0));
        return make_power_noise(d, b0, decay);
    }

    SimParams sim_params() const {
        SimParams sp;
        sp.gamma = gamma;
        sp.dt = dt;
        sp.t_final = t_final;
        if (!h_modes.empty()) {
            sp.h = Field(n_modes);
            for (std::size_t j = 0; j < n_modes && j < h_modes.size(); ++j)
                sp.h[j] = h_modes[j];
        }
        return sp;
    }

    Stepper stepper() const {
        return Stepper(domain(), nonlinearity(), noise(), sim_params());
    }

    // accuracy/stability threshold recorded in the manifest: one radian of the
    // fastest retained oscillation per step
    double dt_stability_bound() const { return length / (3.14159265358979323846 * n_modes); }
};

namespace detail {

inline void check_keys(const json& obj, const std::string& where,
                       const std::set<std::string>& allowed, std::vector<std::string>& errs) {
    if (!obj.is_object()) {
        errs.push_back(where + ": expected an object");
        return;
    }
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key())) errs.push_back(where + ": unknown key '" + it.key() + "'");
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback) {
    if (obj.contains(key)) return obj.at(key).get<T>();
    return fallback;
}

inline InitialSpec parse_initial(const json& obj, const std::string& where,
                                 std::vector<std::string>& errs) {
    InitialSpec spec;
    if (obj.is_null()) return spec;
    check_keys(obj, where, {"kind", "amp", "position", "velocity"}, errs);
    if (!obj.is_object()) return spec;
    spec.kind = get_or<std::string>(obj, "kind", "zero");
    spec.amp = get_or<double>(obj, "amp", 1.0);
    spec.position = get_or<std::vector<double>>(obj, "position", {});
    spec.velocity = get_or<std::vector<double>>(obj, "velocity", {});
    if (spec.kind != "zero" && spec.kind != "bump" && spec.kind != "modes")
        errs.push_back(where + ": unknown initial kind '" + spec.kind + "'");
    return spec;
}

inline ObservableSpec parse_observable(const json& obj, const std::string& where,
                                       std::vector<std::string>& errs) {
    ObservableSpec spec;
    check_keys(obj, where, {"kind", "mode", "amp", "scale", "cap", "value"}, errs);
    if (!obj.is_object()) return spec;
    spec.kind = get_or<std::string>(obj, "kind", "tanh_mode");
    spec.mode = get_or<std::size_t>(obj, "mode", 1);
    spec.amp = get_or<double>(obj, "amp", 1.0);
    spec.scale = get_or<double>(obj, "scale", 1.0);
    spec.cap = get_or<double>(obj, "cap", 1.0);
    spec.value = get_or<double>(obj, "value", 0.0);
    const std::set<std::string> kinds{"tanh_mode", "tanh_vel", "sin_mode", "quad_mode",
                                      "constant"};
    if (!kinds.count(spec.kind))
        errs.push_back(where + ": unknown observable kind '" + spec.kind + "'");
    return spec;
}

}  // namespace detail

// Strict parse: unknown keys are errors, and every violation is collected
// before reporting.
inline ExperimentConfig parse_config(const json& root) {
    std::vector<std::string> errs;
    ExperimentConfig cfg;

    detail::check_keys(root, "top level",
                       {"domain", "norm", "nonlinearity", "noise", "sim", "experiment", "seed"},
                       errs);

    if (root.contains("domain")) {
        const json& d = root["domain"];
        detail::check_keys(d, "domain", {"length", "n_modes"}, errs);
        cfg.length = detail::get_or<double>(d, "length", cfg.length);
        cfg.n_modes = detail::get_or<std::size_t>(d, "n_modes", cfg.n_modes);
    }
    if (root.contains("norm")) {
        const json& n = root["norm"];
        detail::check_keys(n, "norm", {"alpha", "s"}, errs);
        if (n.contains("alpha")) cfg.alpha = n["alpha"].get<double>();
        cfg.s = detail::get_or<double>(n, "s", cfg.s);
    }
    if (root.contains("nonlinearity")) {
        const json& n = root["nonlinearity"];
        detail::check_keys(n, "nonlinearity", {"kind", "rho", "lambda", "C", "nu"}, errs);
        cfg.nl_kind = detail::get_or<std::string>(n, "kind", cfg.nl_kind);
        cfg.rho = detail::get_or<double>(n, "rho", cfg.rho);
        cfg.lambda = detail::get_or<double>(n, "lambda", cfg.lambda);
        cfg.cond_C = detail::get_or<double>(n, "C", cfg.cond_C);
        cfg.cond_nu = detail::get_or<double>(n, "nu", cfg.cond_nu);
    }
    if (root.contains("noise")) {
        const json& n = root["noise"];
        detail::check_keys(n, "noise", {"b0", "decay", "b"}, errs);
        cfg.b0 = detail::get_or<double>(n, "b0", cfg.b0);
        cfg.decay = detail::get_or<double>(n, "decay", cfg.decay);
        cfg.b_explicit = detail::get_or<std::vector<double>>(n, "b", {});
    }
    if (root.contains("sim")) {
        const json& s = root["sim"];
        detail::check_keys(s, "sim", {"gamma", "dt", "t_final", "h_modes"}, errs);
        cfg.gamma = detail::get_or<double>(s, "gamma", cfg.gamma);
        cfg.dt = detail::get_or<double>(s, "dt", cfg.dt);
        cfg.t_final = detail::get_or<double>(s, "t_final", cfg.t_final);
        cfg.h_modes = detail::get_or<std::vector<double>>(s, "h_modes", {});
    }
    if (root.contains("experiment")) {
        cfg.experiment = root["experiment"];
        if (cfg.experiment.is_object() && cfg.experiment.contains("kind"))
            cfg.kind = cfg.experiment["kind"].get<std::string>();
        else
            errs.push_back("experiment: missing 'kind'");
    }
    if (root.contains("seed")) cfg.seed = root["seed"].get<uint64_t>();

    // ---- cross-field validation (every upstream invariant has a rule) ----
    if (!(cfg.length > 0.0)) errs.push_back("domain.length must be positive");
    if (cfg.n_modes < 1) errs.push_back("domain.n_modes must be >= 1");
    if (!(cfg.gamma > 0.0)) errs.push_back("sim.gamma must be positive");
    if (!(cfg.dt > 0.0)) errs.push_back("sim.dt must be positive");
    if (cfg.t_final < 0.0) errs.push_back("sim.t_final must be nonnegative");
    if (cfg.alpha && !(*cfg.alpha > 0.0)) errs.push_back("norm.alpha must be positive");

    const std::set<std::string> nl_kinds{"zero", "sine_gordon", "klein_gordon"};
    if (!nl_kinds.count(cfg.nl_kind))
        errs.push_back("nonlinearity.kind must be zero|sine_gordon|klein_gordon");
    if (cfg.nl_kind == "klein_gordon" && !(cfg.rho > 0.0 && cfg.rho < 2.0))
        errs.push_back("nonlinearity.rho must lie in (0,2)");

    if (cfg.length > 0.0 && cfg.n_modes >= 1) {
        const double pi = 3.14159265358979323846;
        const double lambda1 = (pi / cfg.length) * (pi / cfg.length);
        const double nu_cap = std::min(lambda1, cfg.gamma) / 8.0;
        if (cfg.nl_kind != "zero" && !(cfg.cond_nu < nu_cap))
            errs.push_back("nonlinearity.nu must be < (lambda_1 ^ gamma)/8 = " +
                           std::to_string(nu_cap));
        const double s_cap = 1.0 - 0.5 * cfg.rho;
        if (cfg.nl_kind != "zero" && !(cfg.s >= 0.0 && cfg.s < s_cap))
            errs.push_back("norm.s must lie in [0, 1 - rho/2) = [0, " + std::to_string(s_cap) +
                           ")");
        if (cfg.nl_kind == "zero" && cfg.s < 0.0) errs.push_back("norm.s must be >= 0");
        if (cfg.dt > 0.0) {
            const double bound = cfg.length / (pi * static_cast<double>(cfg.n_modes));
            if (cfg.dt > bound)
                errs.push_back("sim.dt exceeds the stability bound " + std::to_string(bound) +
                               " (one radian of the fastest mode per step)");
        }
    }
    if (!cfg.b_explicit.empty() && cfg.b_explicit.size() != cfg.n_modes)
        errs.push_back("noise.b must have exactly n_modes entries");
    for (double bj : cfg.b_explicit)
        if (bj < 0.0) errs.push_back("noise.b entries must be nonnegative");
    if (cfg.b0 < 0.0) errs.push_back("noise.b0 must be nonnegative");

    const std::set<std::string> kinds{"simulate", "pressure", "ldp", "couple", "eigen",
                                      "verify"};
    if (!kinds.count(cfg.kind)) errs.push_back("experiment.kind must be one of " +
                                               std::string("simulate|pressure|ldp|couple|eigen|verify"));

    // non-degenerate noise is a standing hypothesis of the statistical
    // experiment kinds
    const bool needs_noise = cfg.kind == "pressure" || cfg.kind == "ldp" ||
                             cfg.kind == "eigen" || cfg.kind == "couple";
    if (needs_noise) {
        bool degenerate = cfg.b_explicit.empty()
                              ? !(cfg.b0 > 0.0)
                              : std::any_of(cfg.b_explicit.begin(), cfg.b_explicit.end(),
                                            [](double x) { return !(x > 0.0); });
        if (degenerate)
            errs.push_back("experiment '" + cfg.kind +
                           "' requires b_j > 0 for every retained mode");
    }

    if (!errs.empty()) throw ConfigError(std::move(errs));
    cfg.canonical = root.dump();  // nlohmann objects are key-sorted: canonical
    return cfg;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError({std::string("JSON parse error: ") + e.what()});
    }
    return parse_config(root);
}

}  // namespace nlwlab

#endif
