// classical.hpp: classical counterpart: undamped oscillator driven by white
// noise, x'' + w^2 x = noise, in units where d<H>/dt = 1 for
// H = (v^2 + w^2 x^2)/2, i.e. dx = v dt, dv = -w^2 x dt + sqrt(2) dW.

#pragma once

#include "qfpt/common.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace qfpt {

struct ClassicalConfig {
    double e_b{2.5};
    double h0{0.5};
    double dt{0.0};       // 0 = min(0.01, 0.05/omega)
    double omega{20.0};   // phase resolution only; moments do not depend on it
    bool noise{true};     // false switches off the Wiener term (energy-conservation checks)
    // Brownian-bridge test for crossings between grid points; the detected
    // time is still the end of the step.
    bool bridge_correction{true};
    double max_time{0.0}; // 0 = 200 * (e_b - h0) + 50; trials still running are censored

    double step() const { return dt > 0.0 ? dt : std::min(0.01, 0.05 / omega); }
    double horizon() const { return max_time > 0.0 ? max_time : 200.0 * (e_b - h0) + 50.0; }

    void validate() const {
        if (!(h0 >= 0.0)) throw std::invalid_argument("ClassicalConfig: H0 must be >= 0");
        if (!(omega > 0.0)) throw std::invalid_argument("ClassicalConfig: omega must be > 0");
        if (!(dt >= 0.0)) throw std::invalid_argument("ClassicalConfig: dt must be >= 0");
        // One step must resolve the oscillation phase for the bridge variance.
        if (omega * step() > 0.5)
            throw NumericalError("ClassicalConfig: step too coarse (omega*dt > 0.5)");
    }
};

struct ClassicalMoments {
    double mean;
    double second_moment;
};

// Stochastic-averaging moments: <T> = dH, <T^2> = dH (H0 + 3 dH/2).
inline ClassicalMoments classical_moments(const ClassicalConfig& cfg) {
    const double dh = cfg.e_b - cfg.h0;
    if (dh < 0.0) throw std::invalid_argument("classical_moments: E_B must be >= H0");
    return {dh, dh * (cfg.h0 + 1.5 * dh)};
}

struct ClassicalFptSamples {
    std::vector<double> samples;  // detected first-passage times
    std::uint64_t censored{0};
    double mean{0.0};
    double second_moment{0.0};
    double third_moment{0.0};
    double se_mean{0.0};
    double se_second{0.0};
};

namespace detail {

// Exact one-step sampler for the linear SDE: rotation plus a correlated
// Gaussian kick with covariance 2 * int_0^dt r(s) r(s)^T ds, r = (sin ws/w, cos ws).
struct OscillatorStepper {
    double c, s, w;
    double l11, l21, l22;  // Cholesky factor of the kick covariance

    OscillatorStepper(double omega, double dt) : c(std::cos(omega * dt)), s(std::sin(omega * dt)), w(omega) {
        const double s2 = std::sin(2.0 * omega * dt);
        const double sxx = 2.0 * (dt / 2.0 - s2 / (4.0 * omega)) / (omega * omega);
        const double svv = 2.0 * (dt / 2.0 + s2 / (4.0 * omega));
        const double sxv = 2.0 * (s * s) / (2.0 * omega * omega);
        l11 = std::sqrt(sxx);
        l21 = sxv / l11;
        l22 = std::sqrt(std::max(svv - l21 * l21, 0.0));
    }

    void advance(double& x, double& v, bool noise, std::normal_distribution<double>& gauss, Rng& rng) const {
        const double xn = c * x + s * v / w;
        const double vn = -w * s * x + c * v;
        x = xn;
        v = vn;
        if (noise) {
            const double z1 = gauss(rng), z2 = gauss(rng);
            x += l11 * z1;
            v += l21 * z1 + l22 * z2;
        }
    }
};

inline double energy(double x, double v, double omega) { return 0.5 * (v * v + omega * omega * x * x); }

}  // namespace detail

// First-passage times of H >= E_B starting on the H0 shell at a uniform phase.
inline ClassicalFptSamples simulate_classical_fpt(const ClassicalConfig& cfg, std::uint64_t trials,
                                                  std::uint64_t seed, unsigned threads = 0) {
    cfg.validate();
    if (trials < 1) throw std::invalid_argument("simulate_classical_fpt: trials must be >= 1");
    const double dt = cfg.step();
    const detail::OscillatorStepper stepper(cfg.omega, dt);
    const double horizon = cfg.horizon();

    std::vector<double> fpt(trials, -1.0);
    parallel_for(static_cast<std::size_t>(trials), threads, [&](std::size_t k) {
        if (cfg.h0 >= cfg.e_b) {
            fpt[k] = 0.0;
            return;
        }
        Rng rng = make_rng(seed, k);
        std::normal_distribution<double> gauss(0.0, 1.0);
        const double phase = 2.0 * kPi * uniform01(rng);
        const double amp = std::sqrt(2.0 * cfg.h0);
        double x = amp * std::cos(phase) / cfg.omega;
        double v = amp * std::sin(phase);
        double h = detail::energy(x, v, cfg.omega);
        double t = 0.0;
        while (t < horizon) {
            const double v_prev = v, h_prev = h;
            stepper.advance(x, v, cfg.noise, gauss, rng);
            t += dt;
            h = detail::energy(x, v, cfg.omega);
            if (h >= cfg.e_b) {
                fpt[k] = t;
                return;
            }
            if (cfg.bridge_correction && cfg.noise) {
                // dH = dt + sqrt(2) v dW locally: Brownian bridge with variance 2 v^2 per unit time.
                const double var = (v_prev * v_prev + v * v) * dt;
                if (var > 0.0) {
                    const double p = std::exp(-2.0 * (cfg.e_b - h_prev) * (cfg.e_b - h) / var);
                    if (uniform01(rng) < p) {
                        fpt[k] = t;
                        return;
                    }
                }
            }
        }
    });

    ClassicalFptSamples out;
    for (double t : fpt) {
        if (t < 0.0) ++out.censored;
        else out.samples.push_back(t);
    }
    const double n = static_cast<double>(out.samples.size());
    if (n == 0) return out;
    double s1 = 0, s2 = 0, s3 = 0, s4 = 0;
    for (double t : out.samples) {
        s1 += t;
        s2 += t * t;
        s3 += t * t * t;
        s4 += t * t * t * t;
    }
    out.mean = s1 / n;
    out.second_moment = s2 / n;
    out.third_moment = s3 / n;
    if (n > 1) {
        out.se_mean = std::sqrt(std::max(out.second_moment - out.mean * out.mean, 0.0) / (n - 1));
        out.se_second = std::sqrt(std::max(s4 / n - out.second_moment * out.second_moment, 0.0) / (n - 1));
    }
    return out;
}

// Mean energy at `time` without absorption (checks <H> = H0 + t).
struct EnergyEstimate {
    double mean;
    double se;
};

inline EnergyEstimate classical_energy_at(const ClassicalConfig& cfg, double time, std::uint64_t trials,
                                          std::uint64_t seed, unsigned threads = 0) {
    cfg.validate();
    const double dt = cfg.step();
    const auto steps = static_cast<long>(std::llround(time / dt));
    const detail::OscillatorStepper stepper(cfg.omega, dt);
    std::vector<double> hs(trials);
    parallel_for(static_cast<std::size_t>(trials), threads, [&](std::size_t k) {
        Rng rng = make_rng(seed, k);
        std::normal_distribution<double> gauss(0.0, 1.0);
        const double phase = 2.0 * kPi * uniform01(rng);
        const double amp = std::sqrt(2.0 * cfg.h0);
        double x = amp * std::cos(phase) / cfg.omega;
        double v = amp * std::sin(phase);
        for (long s = 0; s < steps; ++s) stepper.advance(x, v, cfg.noise, gauss, rng);
        hs[k] = detail::energy(x, v, cfg.omega);
    });
    double s1 = 0, s2 = 0;
    for (double h : hs) {
        s1 += h;
        s2 += h * h;
    }
    const double n = static_cast<double>(trials);
    const double mean = s1 / n;
    return {mean, std::sqrt(std::max(s2 / n - mean * mean, 0.0) / std::max(n - 1.0, 1.0))};
}

// ---------------------------- physical units --------------------------------

struct PhysicalParams {
    double mass_kg{6.642e-26};                 // 40Ca+
    double charge_c{1.602176634e-19};
    double omega_rad_s{2.0 * kPi * 3.1e6};
    double hbar{1.054571817e-34};
    double s_xi{0.0};                          // field-noise spectral density, (V/m)^2/Hz

    void validate(bool need_s_xi = true) const {
        if (!(mass_kg > 0 && charge_c > 0 && omega_rad_s > 0 && hbar > 0) || (need_s_xi && !(s_xi > 0)))
            throw std::invalid_argument("PhysicalParams: all parameters must be positive");
    }
};

// ndot = e^2 S_xi(omega) / (4 m omega hbar), quanta per second.
inline double heating_rate_from_noise(const PhysicalParams& p) {
    p.validate();
    return p.charge_c * p.charge_c * p.s_xi / (4.0 * p.mass_kg * p.omega_rad_s * p.hbar);
}

// Inverse map: the S_xi that produces heating rate `ndot`.
inline double noise_density_from_heating_rate(double ndot, const PhysicalParams& p) {
    p.validate(false);
    if (!(ndot > 0.0)) throw std::invalid_argument("noise_density_from_heating_rate: ndot must be > 0");
    return ndot * 4.0 * p.mass_kg * p.omega_rad_s * p.hbar / (p.charge_c * p.charge_c);
}

}  // namespace qfpt
