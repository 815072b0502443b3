// fpt_engine.hpp: stroboscopic first-passage-time distributions.
//
// The ideal pipeline propagates the density matrix and applies the projectors
// P^S / P^A every theta; the realistic pipeline samples trials with the
// composite-pulse Kraus pair, intensity noise, spontaneous emission and
// readout errors. Post-processing: escape curve, moments, tail fits, and the
// spontaneous-emission forward model with its exact inverse.

#pragma once

#include "qfpt/common.hpp"
#include "qfpt/fock.hpp"
#include "qfpt/heating.hpp"
#include "qfpt/step_gate.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace qfpt {

struct FptConfig {
    int n_b{1};
    double theta{0.43};
    int max_steps{60};
    double initial_nbar{0.0};    // 0 = ground state |0>
    std::size_t n_cut{0};        // 0 = default_n_cut(n_b, theta + initial_nbar)
    double dt{1e-3};
    double truncation_cap{kDefaultTruncationCap};

    void validate() const {
        if (n_b < 1) throw std::invalid_argument("FptConfig: N_B must be >= 1");
        if (!(theta > 0.0)) throw std::invalid_argument("FptConfig: theta must be > 0");
        if (max_steps < 1) throw std::invalid_argument("FptConfig: max_steps must be >= 1");
        if (!(initial_nbar >= 0.0)) throw std::invalid_argument("FptConfig: initial_nbar must be >= 0");
        if (n_cut != 0 && n_cut <= static_cast<std::size_t>(n_b))
            throw std::invalid_argument("FptConfig: n_cut must exceed N_B");
    }

    FockSpace space() const {
        return FockSpace(n_cut != 0 ? n_cut : default_n_cut(n_b, theta + 10.0 * initial_nbar));
    }
};

enum class FptMode { deterministic, monte_carlo };

inline const char* to_string(FptMode m) { return m == FptMode::deterministic ? "deterministic" : "monte_carlo"; }

struct Moments {
    double mean{0.0};
    double second_moment{0.0};
    double censored_fraction{0.0};
    bool censoring_warning{false};  // censored_fraction > 1e-3: moments biased low
};

struct TailFit {
    double beta{0.0};
    double t_min{0.0};
    double t_max{0.0};
    double r_squared{0.0};
    double log_amplitude{0.0};
    std::size_t points{0};
};

struct FptdResult {
    double theta{1.0};
    std::vector<double> probs;          // P^FPT(i theta), i = 1..K
    double survivor_remainder{0.0};
    FptMode mode{FptMode::deterministic};
    std::uint64_t trials{0};
    std::vector<std::uint64_t> counts;  // Monte Carlo only: detections per step
    std::uint64_t censored_count{0};
    std::vector<double> escape;         // filled by finalize()
    std::optional<Moments> moments;
    std::optional<TailFit> tail;

    std::size_t steps() const noexcept { return probs.size(); }
    double time(std::size_t i) const { return theta * static_cast<double>(i + 1); }

    // Binomial standard error of each probability (0 in deterministic mode).
    std::vector<double> stderrs() const {
        std::vector<double> s(probs.size(), 0.0);
        if (mode == FptMode::monte_carlo && trials > 0)
            for (std::size_t i = 0; i < probs.size(); ++i)
                s[i] = std::sqrt(probs[i] * (1.0 - probs[i]) / static_cast<double>(trials));
        return s;
    }
};

// ------------------------------- post-processing ----------------------------

inline std::vector<double> escape_probability(const FptdResult& res) {
    std::vector<double> e(res.probs.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < res.probs.size(); ++i) {
        acc += res.probs[i];
        e[i] = acc;
    }
    return e;
}

inline Moments moments(const FptdResult& res) {
    Moments m;
    for (std::size_t i = 0; i < res.probs.size(); ++i) {
        const double t = res.time(i);
        m.mean += t * res.probs[i];
        m.second_moment += t * t * res.probs[i];
    }
    m.censored_fraction = res.survivor_remainder;
    m.censoring_warning = m.censored_fraction > 1e-3;
    return m;
}

inline FptdResult& finalize(FptdResult& res) {
    res.escape = escape_probability(res);
    res.moments = moments(res);
    return res;
}

struct QuantumMoments {
    double mean;
    double second_moment;
};

// theta -> 0 moments from the ground state with threshold N_B.
inline QuantumMoments analytic_quantum_moments(int n_b) {
    if (n_b < 1) throw std::invalid_argument("analytic_quantum_moments: N_B must be >= 1");
    return {static_cast<double>(n_b), n_b * (3.0 * n_b + 1.0) / 2.0};
}

// Exact N_B = 1 law: T ~ Geo(p) on the theta grid with p = theta/(1+theta).
inline FptdResult geometric_reference(double theta, int steps) {
    if (!(theta > 0.0)) throw std::invalid_argument("geometric_reference: theta must be > 0");
    if (steps < 1) throw std::invalid_argument("geometric_reference: steps must be >= 1");
    const double p = theta / (1.0 + theta);
    FptdResult r;
    r.theta = theta;
    double surv = 1.0, sum = 0.0;
    for (int k = 0; k < steps; ++k) {
        r.probs.push_back(surv * p);
        sum += surv * p;
        surv *= 1.0 - p;
    }
    r.survivor_remainder = 1.0 - sum;
    return finalize(r);
}

// Weighted least squares of ln P(i theta) on i theta for i theta >= t_min.
// Weights are (P/stderr)^2 when standard errors exist, uniform otherwise.
inline TailFit tail_fit(const FptdResult& res, double t_min) {
    const auto se = res.stderrs();
    std::vector<double> xs, ys, ws;
    for (std::size_t i = 0; i < res.probs.size(); ++i) {
        const double t = res.time(i);
        if (t + 1e-12 < t_min || !(res.probs[i] > 0.0)) continue;
        xs.push_back(t);
        ys.push_back(std::log(res.probs[i]));
        ws.push_back(se[i] > 0.0 ? std::pow(res.probs[i] / se[i], 2) : 1.0);
    }
    if (xs.size() < 5) throw NumericalError("tail_fit: fewer than 5 positive points beyond t_min");
    double sw = 0, sx = 0, sy = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        sw += ws[k];
        sx += ws[k] * xs[k];
        sy += ws[k] * ys[k];
    }
    const double mx = sx / sw, my = sy / sw;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        sxx += ws[k] * (xs[k] - mx) * (xs[k] - mx);
        sxy += ws[k] * (xs[k] - mx) * (ys[k] - my);
        syy += ws[k] * (ys[k] - my) * (ys[k] - my);
    }
    TailFit fit;
    const double slope = sxy / sxx;
    fit.beta = -slope;
    fit.log_amplitude = my - slope * mx;
    fit.t_min = xs.front();
    fit.t_max = xs.back();
    fit.points = xs.size();
    double ss_res = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const double e = ys[k] - (fit.log_amplitude + slope * xs[k]);
        ss_res += ws[k] * e * e;
    }
    fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
    return fit;
}

// --------------------------- spontaneous emission ---------------------------

// Decay of |D> during an interval shows up as a bright outcome at that
// interval's measurement; the per-step dark-survival factor is s.
struct SpontEmissionModel {
    double tau_s{1.2};
    double ndot_per_s{86.0};

    void validate() const {
        if (!(tau_s > 0.0)) throw std::invalid_argument("SpontEmissionModel: tau must be > 0");
        if (!(ndot_per_s > 0.0)) throw std::invalid_argument("SpontEmissionModel: ndot must be > 0");
    }
    double survival_factor(double theta) const { return std::exp(-theta / (ndot_per_s * tau_s)); }
    double false_bright_probability(double theta) const { return -std::expm1(-theta / (ndot_per_s * tau_s)); }
};

inline FptdResult spont_forward(const FptdResult& truth, const SpontEmissionModel& model) {
    model.validate();
    const double s = model.survival_factor(truth.theta);
    FptdResult obs = truth;
    obs.counts.clear();
    obs.censored_count = 0;
    obs.tail.reset();
    double surv_true = 1.0, surv_obs = 1.0;
    for (std::size_t i = 0; i < truth.probs.size(); ++i) {
        const double hazard = surv_true > 0.0 ? truth.probs[i] / surv_true : 0.0;
        surv_true -= truth.probs[i];
        const double stay = s * (1.0 - hazard);
        obs.probs[i] = surv_obs * (1.0 - stay);
        surv_obs *= stay;
    }
    obs.survivor_remainder = surv_obs;
    return finalize(obs);
}

struct ReconstructOptions {
    bool clamp_negative{false};
};

inline FptdResult spont_reconstruct(const FptdResult& observed, const SpontEmissionModel& model,
                                    ReconstructOptions opts = {}) {
    model.validate();
    const double s = model.survival_factor(observed.theta);
    FptdResult truth = observed;
    truth.counts.clear();
    truth.censored_count = 0;
    truth.tail.reset();
    double surv_true = 1.0, surv_obs = 1.0;
    std::vector<std::size_t> negative;
    for (std::size_t i = 0; i < observed.probs.size(); ++i) {
        const double stay = surv_obs > 0.0 ? 1.0 - observed.probs[i] / surv_obs : 0.0;
        surv_obs -= observed.probs[i];
        double hazard = 1.0 - stay / s;
        if (hazard < -1e-12) {
            negative.push_back(i + 1);
            if (opts.clamp_negative) hazard = 0.0;
        }
        truth.probs[i] = surv_true * hazard;
        surv_true -= truth.probs[i];
    }
    if (!negative.empty() && !opts.clamp_negative)
        throw NumericalError("spont_reconstruct: negative probability at step " + std::to_string(negative.front()) +
                             " (" + std::to_string(negative.size()) + " steps); lifetime model does not fit the data");
    truth.survivor_remainder = surv_true;
    return finalize(truth);
}

// ------------------------------ ideal pipeline ------------------------------

struct IdealDiagnostics {
    std::vector<double> energy_before;     // <n> of the conditional state just before each measurement
    std::vector<double> energy_after;      // <n> just after a survival outcome
    std::vector<double> direct_flux;       // Tr(P^A rho_unnormalized) tracked without renormalizing
    std::vector<double> tail_population;   // max top-level population seen per step
};

inline FptdResult qfptd_ideal(const FptConfig& cfg, IdealDiagnostics* diag = nullptr) {
    cfg.validate();
    const FockSpace space = cfg.space();
    const HeatingPropagator prop(space, HeatingOptions{cfg.dt, cfg.truncation_cap});
    const Eigen::Index d = space.dim();
    const Eigen::Index nb = cfg.n_b;

    MotionalDensityMatrix rho = thermal_state(cfg.initial_nbar, space).state;
    MotionalDensityMatrix rho_raw = rho;
    rho_raw.normalized = false;

    auto absorbed = [&](const Eigen::MatrixXcd& m) {
        double a = 0.0;
        for (Eigen::Index n = nb; n < d; ++n) a += m(n, n).real();
        return a;
    };
    auto project_survive = [&](Eigen::MatrixXcd& m) {
        m.bottomRows(d - nb).setZero();
        m.rightCols(d - nb).setZero();
    };

    FptdResult res;
    res.theta = cfg.theta;
    res.mode = FptMode::deterministic;
    double survival = 1.0;
    for (int step = 0; step < cfg.max_steps; ++step) {
        if (survival <= 0.0) {
            res.probs.push_back(0.0);
            continue;
        }
        rho = prop.evolve(rho, cfg.theta);
        const double p_abs = std::clamp(absorbed(rho.rho) / rho.trace(), 0.0, 1.0);
        res.probs.push_back(survival * p_abs);
        if (diag) {
            rho_raw = prop.evolve(rho_raw, cfg.theta);
            diag->direct_flux.push_back(absorbed(rho_raw.rho));
            project_survive(rho_raw.rho);
            diag->energy_before.push_back(rho.mean_occupation() / rho.trace());
            diag->tail_population.push_back(rho.tail_population() / rho.trace());
        }
        survival *= 1.0 - p_abs;
        project_survive(rho.rho);
        const double kept = rho.trace();
        if (kept > 0.0) rho.rho /= kept;
        if (diag) diag->energy_after.push_back(kept > 0.0 ? rho.mean_occupation() : 0.0);
    }
    res.survivor_remainder = survival;
    return finalize(res);
}

// Builds a Monte Carlo result from per-trial first-bright steps (0 = censored).
inline FptdResult result_from_first_bright(const std::vector<int>& first_bright, int max_steps, double theta) {
    if (first_bright.empty()) throw std::invalid_argument("result_from_first_bright: no trials");
    FptdResult res;
    res.theta = theta;
    res.mode = FptMode::monte_carlo;
    res.trials = first_bright.size();
    res.counts.assign(static_cast<std::size_t>(max_steps), 0);
    for (int s : first_bright) {
        if (s < 0 || s > max_steps) throw std::invalid_argument("result_from_first_bright: step outside horizon");
        if (s == 0) ++res.censored_count;
        else ++res.counts[static_cast<std::size_t>(s - 1)];
    }
    const double n = static_cast<double>(res.trials);
    for (auto c : res.counts) res.probs.push_back(static_cast<double>(c) / n);
    res.survivor_remainder = static_cast<double>(res.censored_count) / n;
    return finalize(res);
}

// ---------------------------- realistic pipeline ----------------------------

struct RealisticOptions {
    std::variant<StepMeasurement, PulseSequence> measurement;
    IntensityNoise noise{};
    std::optional<SpontEmissionModel> spont{};
    double detection_error{0.0};
    std::uint64_t trials{10000};
    std::uint64_t seed{1};
    unsigned threads{0};
};

// One shot per trial step. Outcome bookkeeping per step:
//   1. heat the trajectory for theta;
//   2. draw the Rabi scale (per-shot noise) and form the Kraus pair;
//   3. physical outcome dark with probability ||K_dark psi||^2;
//   4. a dark ion decays with probability 1 - s (recorded bright);
//   5. the readout flips with probability detection_error.
// A recorded dark outcome conditions the motion on the physical outcome.
inline FptdResult qfptd_realistic(const FptConfig& cfg, const RealisticOptions& opts) {
    cfg.validate();
    if (opts.trials < 1) throw std::invalid_argument("qfptd_realistic: trials must be >= 1");
    if (!(opts.detection_error >= 0.0 && opts.detection_error < 0.5))
        throw std::invalid_argument("qfptd_realistic: detection_error must lie in [0, 0.5)");
    const FockSpace space = cfg.space();
    const Eigen::Index d = space.dim();

    const PulseSequence* seq = std::get_if<PulseSequence>(&opts.measurement);
    if (seq) seq->validate();
    if (!seq && opts.noise.active())
        throw std::invalid_argument("qfptd_realistic: intensity noise needs a pulse sequence, not a fixed Kraus pair");
    const StepMeasurement nominal =
        seq ? build_measurement(*seq, space) : std::get<StepMeasurement>(opts.measurement);
    if (nominal.dim() != d) throw std::invalid_argument("qfptd_realistic: measurement dimension differs from n_cut");
    if (opts.spont) opts.spont->validate();
    const double p_decay = opts.spont ? opts.spont->false_bright_probability(cfg.theta) : 0.0;

    std::vector<int> first_bright(opts.trials, 0);  // 0 = censored
    const std::vector<double> thermal_pops = [&] {
        const auto th = thermal_state(cfg.initial_nbar, space).state.populations();
        return std::vector<double>(th.data(), th.data() + th.size());
    }();

    parallel_for(static_cast<std::size_t>(opts.trials), opts.threads, [&](std::size_t trial) {
        Rng rng = make_rng(opts.seed, trial);
        Eigen::Index n0 = 0;
        if (cfg.initial_nbar > 0.0) {
            std::discrete_distribution<Eigen::Index> pick(thermal_pops.begin(), thermal_pops.end());
            n0 = pick(rng);
        }
        TrajectoryState psi = TrajectoryState::fock(space, n0);
        StepMeasurement noisy;
        for (int step = 1; step <= cfg.max_steps; ++step) {
            psi = evolve_heating_trajectory(psi, cfg.theta, rng, cfg.truncation_cap);
            const StepMeasurement* m = &nominal;
            if (opts.noise.active()) {
                noisy = build_measurement(*seq, space, sample_rabi_scale(opts.noise, rng));
                m = &noisy;
            }
            const Eigen::VectorXcd dark_branch = m->k_dark * psi.amplitudes;
            const double p_dark = dark_branch.squaredNorm() / psi.norm2();
            const bool dark = uniform01(rng) < p_dark;
            bool bright_record = !dark;
            if (dark && p_decay > 0.0 && uniform01(rng) < p_decay) bright_record = true;
            if (opts.detection_error > 0.0 && uniform01(rng) < opts.detection_error) bright_record = !bright_record;
            if (bright_record) {
                first_bright[trial] = step;
                return;
            }
            Eigen::VectorXcd next = dark ? dark_branch : Eigen::VectorXcd(m->k_bright * psi.amplitudes);
            psi.amplitudes = next / std::sqrt(next.squaredNorm());
        }
    });

    return result_from_first_bright(first_bright, cfg.max_steps, cfg.theta);
}

}  // namespace qfpt
