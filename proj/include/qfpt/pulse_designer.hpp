// pulse_designer.hpp: synthesis of composite step pulses.
//
// Residuals r_n = sqrt(w_n) * (H[n-N_B] - kappa(n)), n = 0..n_range-1, are
// minimized over phases (free) and durations (boxed in [0, bound]) by a
// projected Levenberg-Marquardt trust-region iteration from random starts.

#pragma once

#include "qfpt/common.hpp"
#include "qfpt/step_gate.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace qfpt {

// Upper duration bound per pulse; the N_B >= 2 values follow the reference
// table, N_B = 1 is wide enough for a single exact pi pulse on |D,1>.
inline double default_duration_bound(int n_b) {
    if (n_b <= 1) return 10.0;
    if (n_b == 2) return 4.0;
    return 6.0;
}

struct DesignSpec {
    int n_b{2};
    int m_p{9};
    int n_range{6};
    double duration_bound{4.0};
    std::vector<double> weights;  // empty = uniform
    int restarts{32};
    std::uint64_t seed{1};
    SidebandParams sideband{};
    unsigned threads{0};

    static DesignSpec defaults_for(int n_b, int m_p) {
        DesignSpec s;
        s.n_b = n_b;
        s.m_p = m_p;
        s.duration_bound = default_duration_bound(n_b);
        return s;
    }

    double weight(int n) const { return weights.empty() ? 1.0 : weights.at(static_cast<std::size_t>(n)); }

    void validate() const {
        if (n_b < 1) throw std::invalid_argument("DesignSpec: N_B must be >= 1");
        if (m_p < 1) throw std::invalid_argument("DesignSpec: M_P must be >= 1");
        if (n_range <= n_b) throw std::invalid_argument("DesignSpec: n_range must exceed N_B");
        if (!(duration_bound > 0.0)) throw std::invalid_argument("DesignSpec: duration_bound must be > 0");
        if (!weights.empty() && weights.size() != static_cast<std::size_t>(n_range))
            throw std::invalid_argument("DesignSpec: weights must have n_range entries");
        for (double w : weights)
            if (!(w >= 0.0)) throw std::invalid_argument("DesignSpec: weights must be nonnegative");
        if (restarts < 1) throw std::invalid_argument("DesignSpec: restarts must be >= 1");
        sideband.validate();
    }
};

// Thermal weighting p_n = nbar^n/(1+nbar)^{n+1}, rescaled to mean 1.
inline std::vector<double> thermal_weights(int n_range, double nbar) {
    std::vector<double> w(static_cast<std::size_t>(n_range));
    double p = 1.0 / (1.0 + nbar), sum = 0.0;
    for (auto& x : w) {
        x = p;
        sum += p;
        p *= nbar / (1.0 + nbar);
    }
    for (auto& x : w) x *= n_range / sum;
    return w;
}

inline Eigen::VectorXd step_residuals(const PulseSequence& seq, const DesignSpec& spec) {
    Eigen::VectorXd r(spec.n_range);
    for (int n = 0; n < spec.n_range; ++n)
        r(n) = std::sqrt(spec.weight(n)) * (heaviside(n - spec.n_b) - kappa(seq, n));
    return r;
}

inline double objective(const PulseSequence& seq, const DesignSpec& spec) {
    if (seq.size() == 0) throw std::invalid_argument("objective: empty sequence");
    return step_residuals(seq, spec).squaredNorm();
}

// ---------------------------- bounded least squares -------------------------

struct BoxLeastSquaresOptions {
    int lm_iterations{200};      // Levenberg-Marquardt phase
    int qn_iterations{5000};     // projected BFGS polish
    double fd_step{1e-7};
    double gradient_tol{1e-14};  // on the projected gradient of the objective
    double objective_floor{1e-28};
    // Stagnation: less than stall_tol relative decrease over stall_window accepted steps.
    int stall_window{100};
    double stall_tol{1e-6};
};

struct BoxLeastSquaresResult {
    Eigen::VectorXd x;
    double objective{0.0};
    int iterations{0};
    bool converged{false};
    std::vector<double> history;  // objective after each accepted step (first = start)
};

namespace detail {

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// Forward differences, flipped to backward at the upper bound.
inline Eigen::MatrixXd fd_jacobian(const ResidualFn& residual, const Eigen::VectorXd& x, const Eigen::VectorXd& r,
                                   const Eigen::VectorXd& upper, double h0) {
    Eigen::MatrixXd jac(r.size(), x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        Eigen::VectorXd xp = x;
        const double h = xp(j) + h0 > upper(j) ? -h0 : h0;
        xp(j) += h;
        jac.col(j) = (residual(xp) - r) / h;
    }
    return jac;
}

// Variables held on a bound by the descent direction -g.
inline std::vector<bool> active_set(const Eigen::VectorXd& x, const Eigen::VectorXd& g, const Eigen::VectorXd& lower,
                                    const Eigen::VectorXd& upper) {
    std::vector<bool> act(static_cast<std::size_t>(x.size()));
    for (Eigen::Index j = 0; j < x.size(); ++j)
        act[static_cast<std::size_t>(j)] = (x(j) <= lower(j) && g(j) > 0.0) || (x(j) >= upper(j) && g(j) < 0.0);
    return act;
}

struct SolverState {
    Eigen::VectorXd x, r;
    double f;
    BoxLeastSquaresResult* out;
    const BoxLeastSquaresOptions* opt;

    // Records an accepted point; true once progress has stalled.
    bool accept(Eigen::VectorXd nx, Eigen::VectorXd nr, double nf) {
        x = std::move(nx);
        r = std::move(nr);
        f = nf;
        auto& h = out->history;
        h.push_back(f);
        const auto w = static_cast<std::size_t>(opt->stall_window);
        return f <= opt->objective_floor || (h.size() > w && h[h.size() - 1 - w] - f <= opt->stall_tol * f);
    }
};

}  // namespace detail

// Bounded least squares min |r(x)|^2, lower <= x <= upper.
//
// Phase 1 is a projected Levenberg-Marquardt iteration: variables pinned at an
// active bound are frozen, steps are shortened to stop at the first bound hit,
// and only steps that lower the objective are accepted. Phase 2 polishes with
// projected BFGS and an Armijo search along the projected path, which keeps
// curvature that the Gauss-Newton model drops when the residual stays finite.
inline BoxLeastSquaresResult box_least_squares(const detail::ResidualFn& residual, Eigen::VectorXd x,
                                               const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                               const BoxLeastSquaresOptions& opt = {}) {
    const Eigen::Index m = x.size();
    x = x.cwiseMax(lower).cwiseMin(upper);
    BoxLeastSquaresResult out;
    Eigen::VectorXd r0 = residual(x);
    const double f0 = r0.squaredNorm();
    detail::SolverState st{x, r0, f0, &out, &opt};
    out.history.push_back(st.f);

    auto projected_gradient_small = [&](const Eigen::VectorXd& g, const std::vector<bool>& act) {
        double gmax = 0.0;
        for (Eigen::Index j = 0; j < m; ++j)
            if (!act[static_cast<std::size_t>(j)]) gmax = std::max(gmax, std::abs(g(j)));
        return gmax <= opt.gradient_tol;
    };

    // ---- Levenberg-Marquardt ----
    double lambda = 1e-3;
    bool done = st.f <= opt.objective_floor;
    for (int iter = 0; iter < opt.lm_iterations && !done; ++iter) {
        ++out.iterations;
        const Eigen::MatrixXd jac = detail::fd_jacobian(residual, st.x, st.r, upper, opt.fd_step);
        const Eigen::VectorXd g = jac.transpose() * st.r;
        const auto act = detail::active_set(st.x, g, lower, upper);
        if (projected_gradient_small(2.0 * g, act)) {
            done = true;
            break;
        }
        std::vector<Eigen::Index> free;
        for (Eigen::Index j = 0; j < m; ++j)
            if (!act[static_cast<std::size_t>(j)]) free.push_back(j);
        const auto nf = static_cast<Eigen::Index>(free.size());
        Eigen::MatrixXd jf(st.r.size(), nf);
        Eigen::VectorXd gf(nf);
        for (Eigen::Index k = 0; k < nf; ++k) {
            jf.col(k) = jac.col(free[static_cast<std::size_t>(k)]);
            gf(k) = g(free[static_cast<std::size_t>(k)]);
        }
        const Eigen::MatrixXd a = jf.transpose() * jf;
        const double scale = std::max(a.diagonal().maxCoeff(), 1e-30);

        bool accepted = false;
        while (lambda < 1e16) {
            Eigen::MatrixXd damped = a;
            damped.diagonal().array() += lambda * scale;
            const Eigen::VectorXd step = damped.ldlt().solve(-gf);
            double len = 1.0;
            for (Eigen::Index k = 0; k < nf; ++k) {
                const Eigen::Index j = free[static_cast<std::size_t>(k)];
                if (st.x(j) + step(k) > upper(j)) len = std::min(len, (upper(j) - st.x(j)) / step(k));
                if (st.x(j) + step(k) < lower(j)) len = std::min(len, (lower(j) - st.x(j)) / step(k));
            }
            Eigen::VectorXd trial = st.x;
            for (Eigen::Index k = 0; k < nf; ++k) trial(free[static_cast<std::size_t>(k)]) += len * step(k);
            trial = trial.cwiseMax(lower).cwiseMin(upper);
            Eigen::VectorXd rt = residual(trial);
            const double ft = rt.squaredNorm();
            if (std::isfinite(ft) && ft < st.f) {
                done = st.accept(std::move(trial), std::move(rt), ft);
                lambda = std::max(lambda / 3.0, 1e-15);
                accepted = true;
                break;
            }
            lambda *= 4.0;
        }
        if (!accepted) break;  // no descent at any damping; hand over to the polish
    }
    if (st.f <= opt.objective_floor) done = true;

    // ---- projected BFGS ----
    // Stagnation in the LM phase is not final: the polish often escapes it.
    if (st.f > opt.objective_floor) {
        done = false;
        const std::size_t polish_start = out.history.size();
        Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(m, m);
        Eigen::VectorXd g = 2.0 * detail::fd_jacobian(residual, st.x, st.r, upper, opt.fd_step).transpose() * st.r;
        for (int iter = 0; iter < opt.qn_iterations; ++iter) {
            ++out.iterations;
            const auto act = detail::active_set(st.x, g, lower, upper);
            if (projected_gradient_small(g, act)) {
                done = true;
                break;
            }
            Eigen::VectorXd gf = g;
            for (Eigen::Index j = 0; j < m; ++j)
                if (act[static_cast<std::size_t>(j)]) gf(j) = 0.0;
            Eigen::VectorXd d = -hinv * gf;
            for (Eigen::Index j = 0; j < m; ++j)
                if (act[static_cast<std::size_t>(j)]) d(j) = 0.0;
            if (d.dot(gf) >= 0.0) {
                hinv.setIdentity();
                d = -gf;
            }
            bool found = false;
            Eigen::VectorXd xn, rn;
            double fn = 0.0;
            for (double step = 1.0; step > 1e-20; step *= 0.5) {
                xn = (st.x + step * d).cwiseMax(lower).cwiseMin(upper);
                rn = residual(xn);
                fn = rn.squaredNorm();
                if (std::isfinite(fn) && fn < st.f && fn <= st.f + 1e-4 * g.dot(xn - st.x)) {
                    found = true;
                    break;
                }
            }
            if (!found) {
                done = true;  // stationary up to finite-difference accuracy
                break;
            }
            const Eigen::VectorXd gn = 2.0 * detail::fd_jacobian(residual, xn, rn, upper, opt.fd_step).transpose() * rn;
            const Eigen::VectorXd s = xn - st.x, y = gn - g;
            const double sy = s.dot(y);
            if (sy > 1e-12 * s.norm() * y.norm()) {
                const double rho = 1.0 / sy;
                const Eigen::MatrixXd left = Eigen::MatrixXd::Identity(m, m) - rho * s * y.transpose();
                hinv = left * hinv * left.transpose() + rho * s * s.transpose();
            }
            g = gn;
            const bool stalled = st.accept(std::move(xn), std::move(rn), fn);
            if (stalled && out.history.size() > polish_start + static_cast<std::size_t>(opt.stall_window)) {
                done = true;
                break;
            }
            if (st.f <= opt.objective_floor) {
                done = true;
                break;
            }
        }
    }
    out.converged = done;
    out.x = st.x;
    out.objective = st.f;
    return out;
}

// --------------------------------- design -----------------------------------

struct RestartRecord {
    double initial_objective{0.0};
    double final_objective{0.0};
    int iterations{0};
    bool converged{false};
    std::vector<double> history;
};

struct DesignResult {
    PulseSequence sequence;
    double objective{0.0};
    std::vector<RestartRecord> restarts;
};

class DesignError : public NumericalError {
public:
    DesignError(const std::string& msg, DesignResult best) : NumericalError(msg), best(std::move(best)) {}
    DesignResult best;
};

namespace detail {

inline PulseSequence unpack_sequence(const Eigen::VectorXd& x, const DesignSpec& spec) {
    PulseSequence s;
    s.n_b_target = spec.n_b;
    s.sideband = spec.sideband;
    const auto m = static_cast<Eigen::Index>(spec.m_p);
    for (Eigen::Index i = 0; i < m; ++i) {
        double p = std::fmod(x(i) / kPi, 2.0);
        if (p < 0.0) p += 2.0;
        s.phases_pi.push_back(p);
        s.durations.push_back(x(m + i));
    }
    return s;
}

// Better-than ordering: objective, then total duration, then phases.
inline bool better_design(double fa, const PulseSequence& a, double fb, const PulseSequence& b) {
    const double tol = std::max(1e-20, 1e-9 * std::max(fa, fb));
    if (std::abs(fa - fb) > tol) return fa < fb;
    if (a.total_duration() != b.total_duration()) return a.total_duration() < b.total_duration();
    return a.phases_pi < b.phases_pi;
}

}  // namespace detail

inline DesignResult design_pulse(const DesignSpec& spec, const BoxLeastSquaresOptions& opt = {}) {
    spec.validate();
    const auto m = static_cast<Eigen::Index>(spec.m_p);
    Eigen::VectorXd lower(2 * m), upper(2 * m);
    lower.head(m).setConstant(-1e300);
    upper.head(m).setConstant(1e300);
    lower.tail(m).setZero();
    upper.tail(m).setConstant(spec.duration_bound);

    auto residual = [&spec](const Eigen::VectorXd& x) {
        return step_residuals(detail::unpack_sequence(x, spec), spec);
    };

    std::vector<RestartRecord> records(static_cast<std::size_t>(spec.restarts));
    std::vector<Eigen::VectorXd> finals(static_cast<std::size_t>(spec.restarts));
    parallel_for(records.size(), spec.threads, [&](std::size_t k) {
        Rng rng = make_rng(spec.seed, k);
        Eigen::VectorXd x0(2 * m);
        for (Eigen::Index i = 0; i < m; ++i) x0(i) = 2.0 * kPi * uniform01(rng);
        for (Eigen::Index i = 0; i < m; ++i) x0(m + i) = spec.duration_bound * (1.0 - uniform01(rng));
        auto res = box_least_squares(residual, x0, lower, upper, opt);
        records[k] = RestartRecord{res.history.front(), res.objective, res.iterations, res.converged,
                                   std::move(res.history)};
        finals[k] = res.x;
    });

    DesignResult best;
    bool any_converged = false;
    for (std::size_t k = 0; k < records.size(); ++k) {
        PulseSequence cand = detail::unpack_sequence(finals[k], spec);
        // Re-score after phase wrapping so the reported objective matches the sequence.
        const double f = objective(cand, spec);
        any_converged = any_converged || records[k].converged;
        if (k == 0 || detail::better_design(f, cand, best.objective, best.sequence)) {
            best.sequence = std::move(cand);
            best.objective = f;
        }
    }
    best.restarts = std::move(records);
    if (!any_converged) throw DesignError("design_pulse: optimizer did not converge on any restart", best);
    return best;
}

// ------------------------------ fidelity report -----------------------------

struct FidelityReport {
    double noiseless_error{0.0};
    double noisy_error{0.0};
    StepProfile kappa_profile;
};

inline FidelityReport fidelity_report(const PulseSequence& seq, const DesignSpec& spec, const IntensityNoise& noise,
                                      int samples = 10000, std::uint64_t seed = 1, int n_max = 10) {
    FidelityReport rep;
    rep.noiseless_error = mean_step_error(seq, spec.n_b, spec.n_range);
    if (noise.active()) {
        Rng rng = make_rng(seed, 0);
        rep.noisy_error = mean_step_error(seq, spec.n_b, spec.n_range, noise, samples, &rng);
    } else {
        rep.noisy_error = rep.noiseless_error;
    }
    rep.kappa_profile = step_profile(seq, n_max);
    return rep;
}

}  // namespace qfpt
