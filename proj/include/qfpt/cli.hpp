// cli.hpp: batch front end: JSON run configs, flag overrides, dispatch and
// deterministic output files (CSV + `.meta.json` sidecar per command).
//
// Exit codes: 0 ok, 1 configuration, 2 numerical, 3 truncation.

#pragma once

#include "qfpt/classical.hpp"
#include "qfpt/common.hpp"
#include "qfpt/estimators.hpp"
#include "qfpt/fpt_engine.hpp"
#include "qfpt/io.hpp"
#include "qfpt/pulse_designer.hpp"
#include "qfpt/pulse_table.hpp"
#include "qfpt/step_gate.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

namespace qfpt {

inline constexpr const char* kToolVersion = "1.0.0";

struct RunConfig {
    std::string command;  // qfptd | design-pulse | eval-pulse | classical-fpt | analyze
    std::uint64_t seed{1};
    std::string output_dir{"."};
    unsigned threads{0};  // 0 = hardware parallelism

    // qfptd
    std::string mode{"ideal"};  // ideal | realistic
    int n_b{1};
    double theta{0.43};
    int max_steps{60};           // analyze: 0 = largest recorded step
    std::uint64_t trials{0};     // 0 = deterministic
    double initial_nbar{0.0};
    std::size_t n_cut{0};        // 0 = automatic
    double dt{0.0};              // 0 = module default (integrator or SDE step)
    std::string pulse_table;     // empty: perfect step (qfptd) / built-in table (eval-pulse)
    int m_p{0};                  // 0 = longest sequence for N_B in the table
    double noise_sigma_over_w{0.0};
    std::string rabi_law{"field"};
    std::optional<double> spont_tau_s;
    double ndot_per_s{86.0};
    double detection_error{0.0};
    bool moments{false};
    std::optional<double> tail_fit_t_min;

    // design-pulse / eval-pulse
    int n_range{6};
    double duration_bound{0.0};  // 0 = default_duration_bound(N_B)
    int restarts{32};
    int samples{10000};

    // classical-fpt
    double e_b{2.5};
    double h0{0.5};
    double omega{20.0};

    // analyze
    std::string trials_csv;

    bool operator==(const RunConfig&) const = default;
};

// ------------------------------- key tables ---------------------------------

namespace detail {

inline const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{"qfptd", "design-pulse", "eval-pulse", "classical-fpt", "analyze"};
    return names;
}

inline std::vector<std::string> keys_for(const std::string& command) {
    std::vector<std::string> k{"command", "seed", "output_dir", "threads"};
    auto add = [&k](std::initializer_list<const char*> more) { k.insert(k.end(), more.begin(), more.end()); };
    if (command == "qfptd")
        add({"mode", "N_B", "theta", "max_steps", "trials", "initial_nbar", "n_cut", "dt", "pulse_table", "M_P",
             "noise_sigma_over_w", "rabi_law", "spont_tau_s", "ndot_per_s", "detection_error", "moments",
             "tail_fit_t_min"});
    else if (command == "design-pulse")
        add({"N_B", "M_P", "n_range", "duration_bound", "restarts"});
    else if (command == "eval-pulse")
        add({"pulse_table", "n_range", "noise_sigma_over_w", "rabi_law", "samples"});
    else if (command == "classical-fpt")
        add({"E_B", "H0", "dt", "omega", "trials"});
    else if (command == "analyze")
        add({"trials_csv", "theta", "max_steps", "moments", "tail_fit_t_min"});
    else
        throw ConfigError("unknown command '" + command + "'");
    return k;
}

template <class T>
void read_key(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError("");
            out = v.get<bool>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError("");
            out = v.get<std::string>();
        } else if constexpr (std::is_same_v<T, std::optional<double>>) {
            if (v.is_null()) out.reset();
            else if (!v.is_number()) throw ConfigError("");
            else out = v.get<double>();
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError("");
            out = v.get<T>();
        } else if constexpr (std::is_unsigned_v<T>) {
            if (!v.is_number_unsigned()) throw ConfigError("");
            const auto u = v.get<std::uint64_t>();
            if (u > std::numeric_limits<T>::max()) throw ConfigError("");
            out = static_cast<T>(u);
        } else {
            if (!v.is_number_integer()) throw ConfigError("");
            const auto i = v.get<std::int64_t>();
            if (i < std::numeric_limits<T>::min() || i > std::numeric_limits<T>::max()) throw ConfigError("");
            out = static_cast<T>(i);
        }
    } catch (const ConfigError&) {
        throw ConfigError(std::string("config key '") + key + "': wrong type or out of range (" + v.dump() + ")");
    }
}

}  // namespace detail

// ------------------------------ JSON mapping --------------------------------

// Strict mapping; unknown keys and keys foreign to the command are errors.
// Defaults are not resolved here (see resolve_config).
inline RunConfig config_from_json(const json& j, const std::string& command_hint = "") {
    if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
    RunConfig c;
    c.command = command_hint;
    if (j.contains("command")) {
        detail::read_key(j, "command", c.command);
        if (!command_hint.empty() && c.command != command_hint)
            throw ConfigError("config: command '" + c.command + "' does not match subcommand '" + command_hint + "'");
    }
    if (c.command.empty()) throw ConfigError("config: missing key 'command'");
    const auto allowed = detail::keys_for(c.command);
    for (const auto& item : j.items())
        if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
            throw ConfigError("config: unknown key '" + item.key() + "' for command '" + c.command + "'");

    using detail::read_key;
    read_key(j, "seed", c.seed);
    read_key(j, "output_dir", c.output_dir);
    read_key(j, "threads", c.threads);
    read_key(j, "mode", c.mode);
    read_key(j, "N_B", c.n_b);
    read_key(j, "theta", c.theta);
    read_key(j, "max_steps", c.max_steps);
    read_key(j, "trials", c.trials);
    read_key(j, "initial_nbar", c.initial_nbar);
    read_key(j, "n_cut", c.n_cut);
    read_key(j, "dt", c.dt);
    read_key(j, "pulse_table", c.pulse_table);
    read_key(j, "M_P", c.m_p);
    read_key(j, "noise_sigma_over_w", c.noise_sigma_over_w);
    read_key(j, "rabi_law", c.rabi_law);
    read_key(j, "spont_tau_s", c.spont_tau_s);
    read_key(j, "ndot_per_s", c.ndot_per_s);
    read_key(j, "detection_error", c.detection_error);
    read_key(j, "moments", c.moments);
    read_key(j, "tail_fit_t_min", c.tail_fit_t_min);
    read_key(j, "n_range", c.n_range);
    read_key(j, "duration_bound", c.duration_bound);
    read_key(j, "restarts", c.restarts);
    read_key(j, "samples", c.samples);
    read_key(j, "E_B", c.e_b);
    read_key(j, "H0", c.h0);
    read_key(j, "omega", c.omega);
    read_key(j, "trials_csv", c.trials_csv);
    return c;
}

inline json config_to_json(const RunConfig& c) {
    json j;
    j["command"] = c.command;
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir;
    j["threads"] = c.threads;
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    if (c.command == "qfptd") {
        j["mode"] = c.mode;
        j["N_B"] = c.n_b;
        j["theta"] = c.theta;
        j["max_steps"] = c.max_steps;
        j["trials"] = c.trials;
        j["initial_nbar"] = c.initial_nbar;
        j["n_cut"] = c.n_cut;
        j["dt"] = c.dt;
        j["pulse_table"] = c.pulse_table;
        j["M_P"] = c.m_p;
        j["noise_sigma_over_w"] = c.noise_sigma_over_w;
        j["rabi_law"] = c.rabi_law;
        j["spont_tau_s"] = opt(c.spont_tau_s);
        j["ndot_per_s"] = c.ndot_per_s;
        j["detection_error"] = c.detection_error;
        j["moments"] = c.moments;
        j["tail_fit_t_min"] = opt(c.tail_fit_t_min);
    } else if (c.command == "design-pulse") {
        j["N_B"] = c.n_b;
        j["M_P"] = c.m_p;
        j["n_range"] = c.n_range;
        j["duration_bound"] = c.duration_bound;
        j["restarts"] = c.restarts;
    } else if (c.command == "eval-pulse") {
        j["pulse_table"] = c.pulse_table;
        j["n_range"] = c.n_range;
        j["noise_sigma_over_w"] = c.noise_sigma_over_w;
        j["rabi_law"] = c.rabi_law;
        j["samples"] = c.samples;
    } else if (c.command == "classical-fpt") {
        j["E_B"] = c.e_b;
        j["H0"] = c.h0;
        j["dt"] = c.dt;
        j["omega"] = c.omega;
        j["trials"] = c.trials;
    } else if (c.command == "analyze") {
        j["trials_csv"] = c.trials_csv;
        j["theta"] = c.theta;
        j["max_steps"] = c.max_steps;
        j["moments"] = c.moments;
        j["tail_fit_t_min"] = opt(c.tail_fit_t_min);
    } else {
        throw ConfigError("unknown command '" + c.command + "'");
    }
    return j;
}

// ------------------------- defaults and validation --------------------------

namespace detail {

inline RabiLaw parse_law(const std::string& s) {
    if (s == "field") return RabiLaw::field;
    if (s == "intensity") return RabiLaw::intensity;
    throw ConfigError("rabi_law must be 'field' or 'intensity', got '" + s + "'");
}

inline std::vector<PulseSequence> load_table(const std::string& path) {
    return path.empty() ? reference_pulse_table() : read_pulse_table_file(path);
}

inline const PulseSequence& pick_sequence(const std::vector<PulseSequence>& table, int n_b, int m_p) {
    const PulseSequence* best = nullptr;
    for (const auto& s : table) {
        if (s.n_b_target != n_b) continue;
        if (m_p > 0 && static_cast<int>(s.size()) == m_p) return s;
        if (m_p == 0 && (!best || s.size() > best->size())) best = &s;
    }
    if (!best)
        throw ConfigError("pulse table has no sequence with N_B=" + std::to_string(n_b) +
                          (m_p > 0 ? " and M_P=" + std::to_string(m_p) : std::string()));
    return *best;
}

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

inline void require_file(const std::string& path, const char* key) {
    if (!std::filesystem::is_regular_file(path)) throw ConfigError(std::string(key) + ": file not found: " + path);
}

}  // namespace detail

// Fills automatic values (0 sentinels) and checks the result; idempotent.
inline RunConfig resolve_config(RunConfig c) {
    using detail::require;
    detail::keys_for(c.command);
    require(!c.output_dir.empty(), "output_dir must not be empty");
    detail::parse_law(c.rabi_law);
    if (c.command == "qfptd") {
        require(c.mode == "ideal" || c.mode == "realistic", "mode must be 'ideal' or 'realistic'");
        require(c.n_b >= 1, "N_B must be >= 1");
        require(c.theta > 0.0, "theta must be > 0");
        require(c.max_steps >= 1, "max_steps must be >= 1");
        require(c.initial_nbar >= 0.0, "initial_nbar must be >= 0");
        require(c.dt >= 0.0, "dt must be >= 0");
        if (c.dt == 0.0) c.dt = HeatingOptions{}.dt;
        if (c.n_cut == 0) c.n_cut = default_n_cut(c.n_b, c.theta + 10.0 * c.initial_nbar);
        require(c.n_cut > static_cast<std::size_t>(c.n_b), "n_cut must exceed N_B");
        require(c.noise_sigma_over_w >= 0.0, "noise_sigma_over_w must be >= 0");
        require(c.detection_error >= 0.0 && c.detection_error < 0.5, "detection_error must lie in [0, 0.5)");
        require(c.ndot_per_s > 0.0, "ndot_per_s must be > 0");
        if (c.spont_tau_s) require(*c.spont_tau_s > 0.0, "spont_tau_s must be > 0");
        if (c.mode == "realistic") {
            require(c.trials > 0, "mode 'realistic' is Monte Carlo only: set trials > 0");
            if (!c.pulse_table.empty()) {
                detail::require_file(c.pulse_table, "pulse_table");
                c.m_p = static_cast<int>(
                    detail::pick_sequence(detail::load_table(c.pulse_table), c.n_b, c.m_p).size());
            } else {
                require(c.noise_sigma_over_w == 0.0, "noise_sigma_over_w needs a pulse_table");
                require(c.m_p == 0, "M_P needs a pulse_table");
            }
        } else {
            require(c.pulse_table.empty() && c.m_p == 0, "pulse_table/M_P apply to mode 'realistic' only");
            require(c.noise_sigma_over_w == 0.0 && c.detection_error == 0.0,
                    "noise_sigma_over_w/detection_error apply to mode 'realistic' only");
        }
    } else if (c.command == "design-pulse") {
        require(c.n_b >= 1, "N_B must be >= 1");
        require(c.m_p >= 1, "M_P must be >= 1");
        if (c.duration_bound == 0.0) c.duration_bound = default_duration_bound(c.n_b);
        require(c.duration_bound > 0.0, "duration_bound must be > 0");
        require(c.n_range > c.n_b, "n_range must exceed N_B");
        require(c.restarts >= 1, "restarts must be >= 1");
    } else if (c.command == "eval-pulse") {
        if (!c.pulse_table.empty()) detail::require_file(c.pulse_table, "pulse_table");
        require(c.n_range >= 2, "n_range must be >= 2");
        require(c.noise_sigma_over_w >= 0.0, "noise_sigma_over_w must be >= 0");
        require(c.samples >= 1, "samples must be >= 1");
    } else if (c.command == "classical-fpt") {
        require(c.h0 >= 0.0 && c.e_b >= c.h0, "need 0 <= H0 <= E_B");
        require(c.omega > 0.0, "omega must be > 0");
        require(c.dt >= 0.0, "dt must be >= 0");
        if (c.dt == 0.0) c.dt = ClassicalConfig{c.e_b, c.h0, 0.0, c.omega}.step();
        require(c.trials >= 1, "trials must be >= 1");
    } else if (c.command == "analyze") {
        require(!c.trials_csv.empty(), "analyze needs trials_csv");
        detail::require_file(c.trials_csv, "trials_csv");
        require(c.theta > 0.0, "theta must be > 0");
        require(c.max_steps >= 0, "max_steps must be >= 0");
    }
    return c;
}

inline RunConfig parse_config_text(const std::string& text, const std::string& name = "config",
                                   const std::string& command_hint = "") {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(name + ": invalid JSON: " + e.what());
    }
    return resolve_config(config_from_json(j, command_hint));
}

inline RunConfig parse_config(const std::string& path, const std::string& command_hint = "") {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not found: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path, command_hint);
}

// ---------------------------------- run -------------------------------------

namespace detail {

inline json meta_header(const RunConfig& c) {
    json m;
    m["tool"] = "qfpt";
    m["version"] = kToolVersion;
    m["command"] = c.command;
    m["seed"] = c.seed;
    m["config"] = config_to_json(c);
    return m;
}

inline std::string out_path(const RunConfig& c, const std::string& file) {
    return (std::filesystem::path(c.output_dir) / file).string();
}

inline void add_post_processing(json& meta, const RunConfig& c, FptdResult& res) {
    if (c.moments) meta["moments"] = moments_json(moments(res));
    if (c.tail_fit_t_min) meta["tail_fit"] = tail_json(tail_fit(res, *c.tail_fit_t_min));
}

inline std::vector<std::string> run_qfptd(const RunConfig& c) {
    FptConfig fc;
    fc.n_b = c.n_b;
    fc.theta = c.theta;
    fc.max_steps = c.max_steps;
    fc.initial_nbar = c.initial_nbar;
    fc.n_cut = c.n_cut;
    fc.dt = c.dt;
    std::optional<SpontEmissionModel> spont;
    if (c.spont_tau_s) spont = SpontEmissionModel{*c.spont_tau_s, c.ndot_per_s};

    FptdResult res;
    if (c.trials == 0) {
        res = qfptd_ideal(fc);
        if (spont) res = spont_forward(res, *spont);
    } else {
        RealisticOptions ro;
        if (c.mode == "realistic" && !c.pulse_table.empty())
            ro.measurement = pick_sequence(load_table(c.pulse_table), c.n_b, c.m_p);
        else
            ro.measurement = StepMeasurement::perfect(fc.space(), c.n_b);
        ro.noise = IntensityNoise{c.noise_sigma_over_w, parse_law(c.rabi_law)};
        ro.spont = spont;
        ro.detection_error = c.detection_error;
        ro.trials = c.trials;
        ro.seed = c.seed;
        ro.threads = c.threads;
        res = qfptd_realistic(fc, ro);
    }

    json meta = meta_header(c);
    meta["mode"] = to_string(res.mode);
    meta["trials"] = res.trials;
    meta["n_cut"] = c.n_cut;
    meta["censored_fraction"] = res.survivor_remainder;
    if (res.mode == FptMode::monte_carlo) {
        const auto curve = escape_with_errors(multinomial_estimate(TrialCounts::from_result(res)));
        meta["escape_stderr"] = curve.sigma;
    }
    add_post_processing(meta, c, res);

    const auto csv = out_path(c, "qfptd.csv"), side = out_path(c, "qfptd.meta.json");
    write_text_file(csv, result_csv(res));
    write_text_file(side, meta.dump(2) + "\n");
    return {csv, side};
}

inline std::vector<std::string> run_analyze(const RunConfig& c) {
    const auto steps = read_trial_records_file(c.trials_csv);
    const int horizon = c.max_steps > 0 ? c.max_steps : std::max(1, *std::max_element(steps.begin(), steps.end()));
    FptdResult res;
    try {
        res = result_from_first_bright(steps, horizon, c.theta);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(c.trials_csv + ": " + e.what());
    }
    const auto curve = escape_with_errors(multinomial_estimate(TrialCounts::from_result(res)));

    json meta = meta_header(c);
    meta["mode"] = to_string(res.mode);
    meta["trials"] = res.trials;
    meta["max_steps"] = horizon;
    meta["censored_fraction"] = res.survivor_remainder;
    meta["escape_stderr"] = curve.sigma;
    add_post_processing(meta, c, res);

    const auto csv = out_path(c, "analyze.csv"), side = out_path(c, "analyze.meta.json");
    write_text_file(csv, result_csv(res));
    write_text_file(side, meta.dump(2) + "\n");
    return {csv, side};
}

inline std::vector<std::string> run_design(const RunConfig& c) {
    DesignSpec spec = DesignSpec::defaults_for(c.n_b, c.m_p);
    spec.n_range = c.n_range;
    spec.duration_bound = c.duration_bound;
    spec.restarts = c.restarts;
    spec.seed = c.seed;
    spec.threads = c.threads;
    const DesignResult r = design_pulse(spec);

    json meta = meta_header(c);
    meta["objective"] = r.objective;
    meta["mean_step_error"] = mean_step_error(r.sequence, c.n_b, c.n_range);
    meta["kappa"] = step_profile(r.sequence).kappa;
    json restarts = json::array();
    for (const auto& rec : r.restarts)
        restarts.push_back({{"initial_objective", rec.initial_objective}, {"final_objective", rec.final_objective},
                            {"iterations", rec.iterations}, {"converged", rec.converged}});
    meta["restarts"] = restarts;

    const auto table = out_path(c, "pulse_table.txt"), side = out_path(c, "pulse_table.meta.json");
    write_text_file(table, write_pulse_table({r.sequence}));
    write_text_file(side, meta.dump(2) + "\n");
    return {table, side};
}

inline std::vector<std::string> run_eval(const RunConfig& c) {
    const auto table = load_table(c.pulse_table);
    if (table.empty()) throw ConfigError("pulse table is empty");
    const IntensityNoise noise{c.noise_sigma_over_w, parse_law(c.rabi_law)};
    std::ostringstream csv;
    csv << "N_B,M_P,n,kappa,kappa_noisy\n";
    json rows = json::array();
    for (std::size_t i = 0; i < table.size(); ++i) {
        const auto& s = table[i];
        if (c.n_range < s.n_b_target + 1)
            throw ConfigError("n_range must be >= N_B + 1 for every sequence in the table");
        // One stream per sequence so the noisy estimate of a row does not depend on its neighbours.
        std::vector<double> kbar(static_cast<std::size_t>(c.n_range), 0.0);
        if (noise.active()) {
            Rng rng = make_rng(c.seed, i);
            for (int k = 0; k < c.samples; ++k) {
                const double scale = sample_rabi_scale(noise, rng);
                for (int n = 0; n < c.n_range; ++n) kbar[static_cast<std::size_t>(n)] += kappa(s, n, scale);
            }
            for (double& v : kbar) v /= c.samples;
        }
        for (int n = 0; n < c.n_range; ++n) {
            const double k0 = kappa(s, n);
            const double kn = noise.active() ? kbar[static_cast<std::size_t>(n)] : k0;
            csv << s.n_b_target << ',' << s.size() << ',' << n << ',' << format_double(k0) << ','
                << format_double(kn) << '\n';
        }
        Rng rng = make_rng(c.seed, i);
        const double noisy = noise.active() ? mean_step_error(s, s.n_b_target, c.n_range, noise, c.samples, &rng)
                                            : mean_step_error(s, s.n_b_target, c.n_range);
        rows.push_back({{"N_B", s.n_b_target},
                        {"M_P", s.size()},
                        {"total_duration", s.total_duration()},
                        {"mean_step_error", mean_step_error(s, s.n_b_target, c.n_range)},
                        {"mean_step_error_noisy", noisy}});
    }
    json meta = meta_header(c);
    meta["sequences"] = rows;

    const auto out = out_path(c, "eval_pulse.csv"), side = out_path(c, "eval_pulse.meta.json");
    write_text_file(out, csv.str());
    write_text_file(side, meta.dump(2) + "\n");
    return {out, side};
}

inline std::vector<std::string> run_classical(const RunConfig& c) {
    ClassicalConfig cc;
    cc.e_b = c.e_b;
    cc.h0 = c.h0;
    cc.dt = c.dt;
    cc.omega = c.omega;
    const auto an = classical_moments(cc);
    const auto s = simulate_classical_fpt(cc, c.trials, c.seed, c.threads);

    std::ostringstream csv;
    csv << "sample,fpt\n";
    for (std::size_t i = 0; i < s.samples.size(); ++i) csv << i << ',' << format_double(s.samples[i]) << '\n';

    json meta = meta_header(c);
    meta["analytic_moments"] = {{"mean", an.mean}, {"second_moment", an.second_moment}};
    meta["sample_moments"] = {{"mean", s.mean},
                              {"second_moment", s.second_moment},
                              {"third_moment", s.third_moment},
                              {"se_mean", s.se_mean},
                              {"se_second", s.se_second}};
    meta["detected"] = s.samples.size();
    meta["censored"] = s.censored;
    meta["horizon"] = cc.horizon();

    const auto out = out_path(c, "classical_fpt.csv"), side = out_path(c, "classical_fpt.meta.json");
    write_text_file(out, csv.str());
    write_text_file(side, meta.dump(2) + "\n");
    return {out, side};
}

}  // namespace detail

// Runs a resolved config and returns the written paths.
inline std::vector<std::string> run(const RunConfig& cfg) {
    const RunConfig c = resolve_config(cfg);
    std::error_code ec;
    std::filesystem::create_directories(c.output_dir, ec);
    if (ec) throw ConfigError("cannot create output_dir " + c.output_dir + ": " + ec.message());
    if (c.command == "qfptd") return detail::run_qfptd(c);
    if (c.command == "design-pulse") return detail::run_design(c);
    if (c.command == "eval-pulse") return detail::run_eval(c);
    if (c.command == "classical-fpt") return detail::run_classical(c);
    return detail::run_analyze(c);
}

// ------------------------------ command line --------------------------------

namespace detail {

template <class T>
struct flag_storage {
    using type = T;
};
template <class T>
struct flag_storage<std::optional<T>> {
    using type = T;
};

// Collects flag bindings; only flags given on the command line override the config.
class FlagSet {
public:
    explicit FlagSet(CLI::App* app) : app_(app) {}

    template <class T>
    void add(const std::string& name, T RunConfig::*field, const std::string& help) {
        auto store = std::make_shared<typename flag_storage<T>::type>();
        CLI::Option* opt = app_->add_option(name, *store, help);
        setters_.push_back([opt, store, field](RunConfig& c) {
            if (opt->count() > 0) c.*field = *store;
        });
    }

    void apply(RunConfig& c) const {
        for (const auto& s : setters_) s(c);
    }

private:
    CLI::App* app_;
    std::vector<std::function<void(RunConfig&)>> setters_;
};

struct Subcommand {
    CLI::App* app;
    FlagSet flags;
    std::string config_path;
    std::string name;
};

}  // namespace detail

// Full command-line entry point; returns the process exit code.
inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"qfpt: first-passage statistics of a heated trapped-ion motional mode"};
    app.require_subcommand(1);
    unsigned threads = 0;
    CLI::Option* threads_opt = app.add_option("--threads", threads, "worker threads (default: hardware parallelism)");

    std::vector<std::unique_ptr<detail::Subcommand>> subs;
    auto make = [&](const std::string& name, const std::string& help) -> detail::Subcommand& {
        auto* a = app.add_subcommand(name, help);
        subs.push_back(std::make_unique<detail::Subcommand>(detail::Subcommand{a, detail::FlagSet(a), {}, name}));
        auto& s = *subs.back();
        a->add_option("--config", s.config_path, "JSON run config; flags override its values");
        s.flags.add("--seed", &RunConfig::seed, "master seed");
        s.flags.add("--out", &RunConfig::output_dir, "output directory");
        return s;
    };

    auto& q = make("qfptd", "first-passage time distribution under stroboscopic measurement");
    bool ideal = false, realistic = false;
    auto* o_ideal = q.app->add_flag("--ideal", ideal, "projective step measurement (default)");
    auto* o_real = q.app->add_flag("--realistic", realistic, "pulse-based measurement with imperfections");
    o_ideal->excludes(o_real);
    q.flags.add("--nb", &RunConfig::n_b, "threshold N_B");
    q.flags.add("--theta", &RunConfig::theta, "measurement interval (dimensionless)");
    q.flags.add("--steps", &RunConfig::max_steps, "number of measurements");
    q.flags.add("--trials", &RunConfig::trials, "Monte Carlo trials (0 = deterministic)");
    q.flags.add("--initial-nbar", &RunConfig::initial_nbar, "initial thermal occupation");
    q.flags.add("--n-cut", &RunConfig::n_cut, "Fock truncation (0 = automatic)");
    q.flags.add("--dt", &RunConfig::dt, "integrator step");
    q.flags.add("--pulse-table", &RunConfig::pulse_table, "pulse table file");
    q.flags.add("--mp", &RunConfig::m_p, "sequence length to pick from the table");
    q.flags.add("--noise-sigma-over-w", &RunConfig::noise_sigma_over_w, "beam-pointing jitter sigma/w");
    q.flags.add("--rabi-law", &RunConfig::rabi_law, "field | intensity");
    q.flags.add("--spont-tau-s", &RunConfig::spont_tau_s, "|D> lifetime in seconds");
    q.flags.add("--ndot-per-s", &RunConfig::ndot_per_s, "heating rate in quanta per second");
    q.flags.add("--detection-error", &RunConfig::detection_error, "symmetric readout flip probability");
    bool q_moments = false;
    auto* o_qm = q.app->add_flag("--moments", q_moments, "report <T> and <T^2>");
    q.flags.add("--tail-fit", &RunConfig::tail_fit_t_min, "fit exp(-beta t) for t >= value");

    auto& d = make("design-pulse", "synthesize a composite step pulse");
    d.flags.add("--nb", &RunConfig::n_b, "threshold N_B");
    d.flags.add("--mp", &RunConfig::m_p, "number of pulses");
    d.flags.add("--n-range", &RunConfig::n_range, "Fock levels in the objective");
    d.flags.add("--duration-bound", &RunConfig::duration_bound, "upper duration bound per pulse");
    d.flags.add("--restarts", &RunConfig::restarts, "random restarts");

    auto& e = make("eval-pulse", "evaluate the step profile of a pulse table");
    e.flags.add("--pulse-table", &RunConfig::pulse_table, "pulse table file (default: built-in reference table)");
    e.flags.add("--n-range", &RunConfig::n_range, "Fock levels in the error");
    e.flags.add("--noise-sigma-over-w", &RunConfig::noise_sigma_over_w, "beam-pointing jitter sigma/w");
    e.flags.add("--rabi-law", &RunConfig::rabi_law, "field | intensity");
    e.flags.add("--samples", &RunConfig::samples, "noise samples");

    auto& k = make("classical-fpt", "first-passage times of the noise-driven classical oscillator");
    k.flags.add("--eb", &RunConfig::e_b, "barrier energy E_B");
    k.flags.add("--h0", &RunConfig::h0, "initial energy H0");
    k.flags.add("--dt", &RunConfig::dt, "time step (0 = automatic)");
    k.flags.add("--omega", &RunConfig::omega, "oscillator frequency");
    k.flags.add("--trials", &RunConfig::trials, "trajectories");

    auto& a = make("analyze", "estimate a first-passage distribution from trial records");
    a.flags.add("--trials-csv", &RunConfig::trials_csv, "CSV with trial_id,first_bright_step");
    a.flags.add("--theta", &RunConfig::theta, "measurement interval");
    a.flags.add("--steps", &RunConfig::max_steps, "horizon (0 = largest recorded step)");
    bool a_moments = false;
    auto* o_am = a.app->add_flag("--moments", a_moments, "report <T> and <T^2>");
    a.flags.add("--tail-fit", &RunConfig::tail_fit_t_min, "fit exp(-beta t) for t >= value");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& ex) {
        const int code = app.exit(ex, out, err);
        return code == 0 ? 0 : 1;
    }

    try {
        for (auto& s : subs) {
            if (!s->app->parsed()) continue;
            RunConfig cfg;
            cfg.command = s->name;
            if (!s->config_path.empty()) {
                std::ifstream in(s->config_path);
                if (!in) throw ConfigError("config file not found: " + s->config_path);
                std::stringstream ss;
                ss << in.rdbuf();
                json j;
                try {
                    j = json::parse(ss.str());
                } catch (const json::parse_error& ex) {
                    throw ConfigError(s->config_path + ": invalid JSON: " + ex.what());
                }
                cfg = config_from_json(j, s->name);
            }
            s->flags.apply(cfg);
            if (threads_opt->count() > 0) cfg.threads = threads;
            if (s->name == "qfptd") {
                if (o_real->count() > 0) cfg.mode = "realistic";
                if (o_ideal->count() > 0) cfg.mode = "ideal";
                if (o_qm->count() > 0) cfg.moments = q_moments;
            }
            if (s->name == "analyze" && o_am->count() > 0) cfg.moments = a_moments;
            for (const auto& path : run(cfg)) out << path << '\n';
        }
        return 0;
    } catch (const TruncationError& ex) {
        err << "truncation error: " << ex.what() << '\n';
        return 3;
    } catch (const NumericalError& ex) {
        err << "numerical error: " << ex.what() << '\n';
        return 2;
    } catch (const ConfigError& ex) {
        err << "config error: " << ex.what() << '\n';
        return 1;
    } catch (const std::invalid_argument& ex) {
        err << "config error: " << ex.what() << '\n';
        return 1;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << '\n';
        return 2;
    }
}

}  // namespace qfpt
