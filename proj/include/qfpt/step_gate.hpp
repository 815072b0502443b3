// step_gate.hpp: composite-phase blue-sideband "step pulse".
//
// Each pulse rotates every manifold {|S,n-1>, |D,n>} independently, so the
// whole sequence factorizes into 2x2 SU(2) products per manifold. From these
// we get the rotation probability kappa(n), the Kraus pair seen by the motion
// after fluorescence detection, and noise-averaged step errors.
//
// Durations are expressed in the pulse-table unit: one unit is 2*pi/Omega00
// of real time, so a pulse of d units rotates manifold n by the angle
// pi * (Omega_{n-1,n}/Omega00) * d (transfer probability sin^2 of that angle).

#pragma once

#include "qfpt/common.hpp"
#include "qfpt/fock.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

namespace qfpt {

struct PulseSequence {
    int n_b_target{1};
    std::vector<double> phases_pi;   // phase of each pulse in units of pi
    std::vector<double> durations;   // pulse-table units (see file comment)
    SidebandParams sideband{};

    std::size_t size() const noexcept { return phases_pi.size(); }
    double phase(std::size_t i) const { return kPi * phases_pi.at(i); }
    double total_duration() const {
        double s = 0.0;
        for (double d : durations) s += d;
        return s;
    }

    void validate() const {
        if (phases_pi.empty()) throw std::invalid_argument("PulseSequence: needs at least one pulse");
        if (phases_pi.size() != durations.size())
            throw std::invalid_argument("PulseSequence: phases and durations differ in length");
        for (double d : durations)
            if (!(d >= 0.0)) throw std::invalid_argument("PulseSequence: durations must be >= 0");
        sideband.validate();
    }

    bool operator==(const PulseSequence& o) const {
        return n_b_target == o.n_b_target && phases_pi == o.phases_pi && durations == o.durations &&
               sideband.eta == o.sideband.eta && sideband.omega00 == o.sideband.omega00;
    }
};

// Real time of `units` pulse-table duration units.
inline double pulse_duration_seconds(double units, const SidebandParams& p) {
    return units * 2.0 * kPi / p.omega00;
}

using Su2 = Eigen::Matrix2cd;

// Propagator of the full sequence on manifold n >= 1, basis (|S,n-1>, |D,n>).
inline Su2 manifold_propagator(const PulseSequence& seq, int n, double rabi_scale) {
    if (n < 1) throw std::invalid_argument("manifold_propagator: manifold index must be >= 1");
    const double rate = kPi * rabi_scale * bsb_coupling(n - 1, seq.sideband);
    Su2 u = Su2::Identity();
    for (std::size_t i = 0; i < seq.size(); ++i) {
        const double angle = rate * seq.durations[i];
        const double c = std::cos(angle), s = std::sin(angle);
        const cplx e = std::polar(1.0, seq.phase(i));
        Su2 r;
        r << c, cplx(0.0, -s) * std::conj(e),
             cplx(0.0, -s) * e, c;
        u = r * u;
    }
    return u;
}

inline double kappa(const PulseSequence& seq, int n, double rabi_scale = 1.0) {
    if (n < 0) throw std::invalid_argument("kappa: n must be >= 0");
    if (n == 0) return 0.0;  // |D,0> has no |S,-1> partner
    return std::norm(manifold_propagator(seq, n, rabi_scale)(0, 1));
}

struct StepProfile {
    std::vector<double> kappa;  // kappa(n) for n = 0..n_max
};

inline StepProfile step_profile(const PulseSequence& seq, int n_max = 10, double rabi_scale = 1.0) {
    StepProfile p;
    p.kappa.reserve(static_cast<std::size_t>(n_max) + 1);
    for (int n = 0; n <= n_max; ++n) p.kappa.push_back(kappa(seq, n, rabi_scale));
    return p;
}

// ------------------------------- Kraus pair ---------------------------------

// Motion-space blocks of the pulse unitary for an ion prepared in |D>:
// K_dark = <D|U|D>, K_bright = <S|U|D>.
struct StepMeasurement {
    Eigen::MatrixXcd k_dark;
    Eigen::MatrixXcd k_bright;

    Eigen::Index dim() const noexcept { return k_dark.rows(); }

    double completeness_error() const {
        const Eigen::MatrixXcd c = k_dark.adjoint() * k_dark + k_bright.adjoint() * k_bright;
        return (c - Eigen::MatrixXcd::Identity(dim(), dim())).cwiseAbs().maxCoeff();
    }

    // Ideal projectors: K_dark = P^S and K_bright = sum_{n>=N_B} |n-1><n|.
    static StepMeasurement perfect(const FockSpace& space, int n_b) {
        if (n_b < 1) throw std::invalid_argument("StepMeasurement::perfect: N_B must be >= 1");
        const Eigen::Index d = space.dim();
        StepMeasurement m{Eigen::MatrixXcd::Zero(d, d), Eigen::MatrixXcd::Zero(d, d)};
        for (Eigen::Index n = 0; n < d; ++n) {
            if (n < n_b) m.k_dark(n, n) = 1.0;
            else m.k_bright(n - 1, n) = 1.0;
        }
        return m;
    }
};

inline StepMeasurement build_measurement(const PulseSequence& seq, const FockSpace& space, double rabi_scale = 1.0) {
    seq.validate();
    const Eigen::Index d = space.dim();
    StepMeasurement m{Eigen::MatrixXcd::Zero(d, d), Eigen::MatrixXcd::Zero(d, d)};
    m.k_dark(0, 0) = 1.0;
    for (Eigen::Index n = 1; n < d; ++n) {
        const Su2 u = manifold_propagator(seq, static_cast<int>(n), rabi_scale);
        m.k_dark(n, n) = u(1, 1);
        m.k_bright(n - 1, n) = u(0, 1);
    }
    return m;
}

// ------------------------------- intensity noise ----------------------------

enum class RabiLaw {
    field,      // Omega ∝ exp(-r^2/w^2), Gaussian field amplitude
    intensity,  // Omega ∝ exp(-2 r^2/w^2)
};

// Beam-center jitter: r ~ Rayleigh(sigma), sampled once per shot.
struct IntensityNoise {
    double sigma_over_w{0.0};
    RabiLaw law{RabiLaw::field};

    bool active() const noexcept { return sigma_over_w > 0.0; }
};

inline double sample_rabi_scale(const IntensityNoise& noise, Rng& rng) {
    if (noise.sigma_over_w < 0.0) throw std::invalid_argument("sample_rabi_scale: sigma_over_w must be >= 0");
    if (!noise.active()) return 1.0;
    const double u = 1.0 - uniform01(rng);  // (0,1]
    const double r_over_w = noise.sigma_over_w * std::sqrt(-2.0 * std::log(u));
    const double k = noise.law == RabiLaw::field ? 1.0 : 2.0;
    return std::exp(-k * r_over_w * r_over_w);
}

// Discrete Heaviside H[i]: 0 for i < 0, 1 otherwise.
inline double heaviside(int i) noexcept { return i < 0 ? 0.0 : 1.0; }

// Mean over n = 0..n_range-1 of |H[n-N_B] - kappa_bar(n)|, kappa_bar being the
// noise average over `samples` shots (or the noiseless kappa without noise).
// `kappa_of(n, rabi_scale)` supplies the profile, so synthetic steps can be scored too.
template <class KappaFn>
double mean_step_error_of(KappaFn&& kappa_of, int n_b, int n_range,
                          const std::optional<IntensityNoise>& noise, int samples, Rng* rng) {
    if (n_range < n_b + 1) throw std::invalid_argument("mean_step_error: n_range must be >= N_B + 1");
    const bool noisy = noise && noise->active();
    if (noisy && (samples < 1 || rng == nullptr))
        throw std::invalid_argument("mean_step_error: noise needs samples >= 1 and a random stream");

    std::vector<double> kbar(static_cast<std::size_t>(n_range), 0.0);
    if (noisy) {
        for (int s = 0; s < samples; ++s) {
            const double scale = sample_rabi_scale(*noise, *rng);
            for (int n = 0; n < n_range; ++n) kbar[static_cast<std::size_t>(n)] += kappa_of(n, scale);
        }
        for (double& k : kbar) k /= samples;
    } else {
        for (int n = 0; n < n_range; ++n) kbar[static_cast<std::size_t>(n)] = kappa_of(n, 1.0);
    }
    double err = 0.0;
    for (int n = 0; n < n_range; ++n) err += std::abs(heaviside(n - n_b) - kbar[static_cast<std::size_t>(n)]);
    return err / n_range;
}

inline double mean_step_error(const PulseSequence& seq, int n_b, int n_range,
                              const std::optional<IntensityNoise>& noise = std::nullopt,
                              int samples = 1, Rng* rng = nullptr) {
    return mean_step_error_of([&seq](int n, double scale) { return kappa(seq, n, scale); },
                              n_b, n_range, noise, samples, rng);
}

}  // namespace qfpt
