// heating.hpp: motional heating by a high-temperature amplitude reservoir.
//
// All times are dimensionless (t = ndot * t'), so the generator
//   L(rho) = a rho a† + a† rho a - (1/2){a†a + a a†, rho}
// has unit rate. Three views are provided: density-matrix propagation, the
// jump unraveling for single trajectories, and the continuous-measurement
// limit with an absorbing boundary at N_B.

#pragma once

#include "qfpt/common.hpp"
#include "qfpt/fock.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace qfpt {

struct HeatingParams {
    double ndot{86.0};  // quanta per second

    double to_dimensionless(double seconds) const { return ndot * seconds; }
    double to_seconds(double t) const { return t / ndot; }
};

struct HeatingOptions {
    double dt{1e-3};                             // RK4 step, dimensionless
    double truncation_cap{kDefaultTruncationCap};
};

namespace detail {

inline Eigen::SparseMatrix<double> to_sparse_real(const Eigen::MatrixXcd& m) {
    return m.real().sparseView();
}

// Vectorized Lindbladian acting on column-major vec(rho).
inline Eigen::SparseMatrix<cplx> heating_superoperator(const FockSpace& space) {
    const auto ops = make_operators(space);
    using Sp = Eigen::SparseMatrix<double>;
    const Sp a = to_sparse_real(ops.a);
    const Sp ad = to_sparse_real(ops.a_dagger);
    Sp id(space.dim(), space.dim());
    id.setIdentity();
    const Sp d = to_sparse_real(ops.a_dagger * ops.a + ops.a * ops.a_dagger);
    // vec(A rho B) = (B^T ⊗ A) vec(rho); all operators are real.
    Sp at = a.transpose();
    Sp adt = ad.transpose();
    Sp dt = d.transpose();
    Sp jump_down = Eigen::kroneckerProduct(adt, a);
    Sp jump_up = Eigen::kroneckerProduct(at, ad);
    Sp left = Eigen::kroneckerProduct(id, d);
    Sp right = Eigen::kroneckerProduct(dt, id);
    Sp l = jump_down + jump_up - 0.5 * (left + right);
    l.makeCompressed();
    return l.cast<cplx>();
}

// Classic fixed-step RK4 for y' = L y, step count rounded up so h <= dt.
inline void rk4_linear(const Eigen::SparseMatrix<cplx>& l, Eigen::VectorXcd& y, double duration, double dt) {
    if (duration <= 0.0) return;
    const auto steps = static_cast<long>(std::ceil(duration / dt - 1e-12));
    const double h = duration / static_cast<double>(steps);
    Eigen::VectorXcd k1, k2, k3, k4;
    for (long s = 0; s < steps; ++s) {
        k1 = l * y;
        k2 = l * (y + 0.5 * h * k1);
        k3 = l * (y + 0.5 * h * k2);
        k4 = l * (y + h * k3);
        y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
}

}  // namespace detail

// ------------------------------ density matrix ------------------------------

// Reusable propagator: the superoperator is assembled once per n_cut.
class HeatingPropagator {
public:
    explicit HeatingPropagator(const FockSpace& space, HeatingOptions opts = {})
        : space_(space), opts_(opts), l_(detail::heating_superoperator(space)) {
        if (!(opts_.dt > 0.0)) throw std::invalid_argument("HeatingPropagator: dt must be > 0");
    }

    const FockSpace& space() const noexcept { return space_; }
    const HeatingOptions& options() const noexcept { return opts_; }
    const Eigen::SparseMatrix<cplx>& generator() const noexcept { return l_; }

    MotionalDensityMatrix evolve(const MotionalDensityMatrix& in, double duration) const {
        if (!(duration >= 0.0)) throw std::invalid_argument("evolve_heating_dm: duration must be >= 0");
        if (in.dim() != space_.dim()) throw std::invalid_argument("evolve_heating_dm: dimension mismatch");
        const Eigen::Index d = space_.dim();
        Eigen::VectorXcd y = Eigen::Map<const Eigen::VectorXcd>(in.rho.data(), d * d);
        detail::rk4_linear(l_, y, duration, opts_.dt);
        MotionalDensityMatrix out{Eigen::Map<Eigen::MatrixXcd>(y.data(), d, d), in.normalized};
        out.rho = 0.5 * (out.rho + out.rho.adjoint()).eval();
        const double tr = out.trace();
        check_truncation("evolve_heating_dm", tr > 0.0 ? out.tail_population() / tr : 0.0, opts_.truncation_cap);
        return out;
    }

private:
    FockSpace space_;
    HeatingOptions opts_;
    Eigen::SparseMatrix<cplx> l_;
};

inline MotionalDensityMatrix evolve_heating_dm(const MotionalDensityMatrix& rho, double duration,
                                               HeatingOptions opts = {}) {
    return HeatingPropagator(FockSpace(static_cast<std::size_t>(rho.dim())), opts).evolve(rho, duration);
}

// ------------------------------- trajectories -------------------------------

// Jump unraveling with operators a (rate <a†a>) and a† (rate <a a†>), and
// non-Hermitian drift exp(-(1/2)(a†a + a a†) t), which is diagonal. Jump times
// are drawn by the waiting-time method: the unnormalized norm decays until it
// hits a uniform threshold, which samples the jump process exactly.
inline TrajectoryState evolve_heating_trajectory(const TrajectoryState& state, double duration, Rng& rng,
                                                 double truncation_cap = kDefaultTruncationCap) {
    if (!(duration >= 0.0)) throw std::invalid_argument("evolve_heating_trajectory: duration must be >= 0");
    const Eigen::Index d = state.dim();
    Eigen::VectorXcd psi = state.amplitudes / std::sqrt(state.norm2());

    // decay[n] = (a†a + a a†)_nn with the truncated a a†.
    Eigen::VectorXd decay(d);
    for (Eigen::Index n = 0; n < d; ++n) decay(n) = static_cast<double>(n) + (n + 1 < d ? n + 1.0 : 0.0);

    Eigen::VectorXd pops(d);
    auto norm_after = [&](double tau) { return (pops.array() * (-decay.array() * tau).exp()).sum(); };
    auto drift = [&](double tau) {
        for (Eigen::Index n = 0; n < d; ++n) psi(n) *= std::exp(-0.5 * decay(n) * tau);
        psi /= std::sqrt(psi.squaredNorm());
    };

    double t = 0.0;
    while (t < duration) {
        const double remaining = duration - t;
        pops = psi.cwiseAbs2();
        const double threshold = uniform01(rng);
        if (norm_after(remaining) > threshold) {
            drift(remaining);
            break;
        }
        // norm_after is decreasing and convex: safeguarded Newton on [0, remaining].
        double lo = 0.0, hi = remaining, tau = 0.0;
        for (int it = 0; it < 100; ++it) {
            const double f = norm_after(tau) - threshold;
            if (std::abs(f) < 1e-14) break;
            if (f > 0.0) lo = tau; else hi = tau;
            const double slope = -(pops.array() * decay.array() * (-decay.array() * tau).exp()).sum();
            double next = slope < 0.0 ? tau - f / slope : 0.5 * (lo + hi);
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            if (hi - lo < 1e-15) break;
            tau = next;
        }
        drift(tau);
        t += tau;

        double down = 0.0, up = 0.0;
        for (Eigen::Index n = 0; n < d; ++n) {
            const double p = std::norm(psi(n));
            down += static_cast<double>(n) * p;
            if (n + 1 < d) up += (n + 1.0) * p;
        }
        Eigen::VectorXcd next = Eigen::VectorXcd::Zero(d);
        if (uniform01(rng) * (down + up) < down) {
            for (Eigen::Index n = 1; n < d; ++n) next(n - 1) = std::sqrt(static_cast<double>(n)) * psi(n);
        } else {
            for (Eigen::Index n = 0; n + 1 < d; ++n) next(n + 1) = std::sqrt(n + 1.0) * psi(n);
        }
        psi = next / std::sqrt(next.squaredNorm());
    }

    TrajectoryState out{psi, true};
    check_truncation("evolve_heating_trajectory", out.tail_population(), truncation_cap);
    return out;
}

// ------------------------- continuous-measurement limit ---------------------

struct FptDensityCurve {
    std::vector<double> times;
    std::vector<double> density;     // f(t) = -d/dt Tr rho_surv
    std::vector<double> cumulative;  // 1 - Tr rho_surv
    double mean{0.0};                // from integral of t f
    double second_moment{0.0};       // from integral of t^2 f
    double mean_from_survival{0.0};  // integral of S
    double second_from_survival{0.0};// 2 * integral of t S
};

// Heating with an absorbing boundary: rho lives on {|0>..|N_B-1>}, and the
// up-jump out of |N_B-1> is recorded as first-passage flux.
inline FptDensityCurve absorbing_fptd(int n_b, double t_max, double grid_dt = 1e-3) {
    if (n_b < 1) throw std::invalid_argument("absorbing_fptd: N_B must be >= 1");
    if (!(t_max > 0.0) || !(grid_dt > 0.0)) throw std::invalid_argument("absorbing_fptd: t_max and grid_dt must be > 0");

    const FockSpace outer(static_cast<std::size_t>(n_b) + 1);
    const auto full = detail::heating_superoperator(outer);
    const Eigen::Index big = outer.dim();
    const Eigen::Index small = n_b;

    // Restrict to the surviving block: keep rows/cols of vec indices with i,j < N_B.
    std::vector<Eigen::Index> keep_index(static_cast<std::size_t>(big * big), -1);
    for (Eigen::Index j = 0; j < small; ++j)
        for (Eigen::Index i = 0; i < small; ++i) keep_index[static_cast<std::size_t>(i + big * j)] = i + small * j;
    std::vector<Eigen::Triplet<cplx>> trips;
    for (int k = 0; k < full.outerSize(); ++k)
        for (Eigen::SparseMatrix<cplx>::InnerIterator it(full, k); it; ++it) {
            const auto r = keep_index[static_cast<std::size_t>(it.row())];
            const auto c = keep_index[static_cast<std::size_t>(it.col())];
            if (r >= 0 && c >= 0) trips.emplace_back(r, c, it.value());
        }
    Eigen::SparseMatrix<cplx> l(small * small, small * small);
    l.setFromTriplets(trips.begin(), trips.end());

    Eigen::RowVectorXcd trace_row = Eigen::RowVectorXcd::Zero(small * small);
    for (Eigen::Index i = 0; i < small; ++i) trace_row(i + small * i) = 1.0;

    Eigen::VectorXcd y = Eigen::VectorXcd::Zero(small * small);
    y(0) = 1.0;

    const auto steps = static_cast<long>(std::ceil(t_max / grid_dt - 1e-12));
    const double h = t_max / static_cast<double>(steps);
    FptDensityCurve out;
    out.times.reserve(static_cast<std::size_t>(steps) + 1);
    std::vector<double> survival;
    for (long s = 0; s <= steps; ++s) {
        if (s > 0) detail::rk4_linear(l, y, h, h);
        const double t = h * static_cast<double>(s);
        const double surv = (trace_row * y)(0).real();
        const double flux = -(trace_row * (l * y))(0).real();
        out.times.push_back(t);
        out.density.push_back(std::max(flux, 0.0));
        out.cumulative.push_back(std::clamp(1.0 - surv, 0.0, 1.0));
        survival.push_back(surv);
    }
    // Keep the cumulative monotone against round-off.
    for (std::size_t i = 1; i < out.cumulative.size(); ++i)
        out.cumulative[i] = std::max(out.cumulative[i], out.cumulative[i - 1]);

    for (std::size_t i = 1; i < out.times.size(); ++i) {
        const double t0 = out.times[i - 1], t1 = out.times[i];
        const double w = 0.5 * (t1 - t0);
        out.mean += w * (t0 * out.density[i - 1] + t1 * out.density[i]);
        out.second_moment += w * (t0 * t0 * out.density[i - 1] + t1 * t1 * out.density[i]);
        out.mean_from_survival += w * (survival[i - 1] + survival[i]);
        out.second_from_survival += 2.0 * w * (t0 * survival[i - 1] + t1 * survival[i]);
    }
    const auto rel = [](double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); };
    if (rel(out.mean, out.mean_from_survival) > 2e-3 || rel(out.second_moment, out.second_from_survival) > 2e-3)
        throw NumericalError("absorbing_fptd: moment self-consistency failed (grid too coarse or t_max too short)");
    return out;
}

}  // namespace qfpt
