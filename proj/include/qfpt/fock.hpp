// fock.hpp: truncated number basis of one motional mode: states, ladder
// operators, thermal populations and blue-sideband coupling strengths.

#pragma once

#include "qfpt/common.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace qfpt {

inline constexpr double kDefaultTruncationCap = 1e-4;

struct FockSpace {
    std::size_t n_cut{30};

    explicit FockSpace(std::size_t n) : n_cut(n) {
        if (n < 2) throw std::invalid_argument("FockSpace: n_cut must be >= 2");
    }
    Eigen::Index dim() const noexcept { return static_cast<Eigen::Index>(n_cut); }
};

// Default cutoff for heating over an unmeasured span `t_span` starting below N_B.
// The thermal tail at nbar = t decays with ratio t/(1+t).
inline std::size_t default_n_cut(int n_b, double t_span) {
    const double n = 10.0 * n_b + 10.0 * t_span;
    return std::max<std::size_t>(30, static_cast<std::size_t>(std::ceil(n)));
}

struct LadderOperators {
    Eigen::MatrixXcd a;
    Eigen::MatrixXcd a_dagger;
    Eigen::MatrixXcd number_op;
};

// a|n> = sqrt(n)|n-1>; the |n_cut-1> -> |n_cut> element of a† is dropped.
inline LadderOperators make_operators(const FockSpace& space) {
    const Eigen::Index d = space.dim();
    LadderOperators ops;
    ops.a = Eigen::MatrixXcd::Zero(d, d);
    ops.number_op = Eigen::MatrixXcd::Zero(d, d);
    for (Eigen::Index n = 1; n < d; ++n) ops.a(n - 1, n) = std::sqrt(static_cast<double>(n));
    for (Eigen::Index n = 0; n < d; ++n) ops.number_op(n, n) = static_cast<double>(n);
    ops.a_dagger = ops.a.adjoint();
    return ops;
}

// ------------------------------- sideband couplings -------------------------

struct SidebandParams {
    double eta{0.05533};                 // Lamb-Dicke parameter
    double omega00{2.0 * kPi * 300e3};   // carrier Rabi frequency, rad/s

    void validate() const {
        if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("SidebandParams: eta must lie in (0,1)");
        if (!(omega00 > 0.0)) throw std::invalid_argument("SidebandParams: omega00 must be > 0");
    }
};

// Generalized Laguerre polynomial L_n^alpha(x) by the three-term recurrence.
inline double laguerre(int n, double alpha, double x) {
    if (n < 0) throw std::invalid_argument("laguerre: n must be >= 0");
    double prev = 1.0;
    if (n == 0) return prev;
    double cur = 1.0 + alpha - x;
    for (int k = 1; k < n; ++k) {
        const double next = ((2.0 * k + 1.0 + alpha - x) * cur - (k + alpha) * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    return cur;
}

// Omega_{n,n+1} / Omega00 for the |S,n> <-> |D,n+1> blue sideband.
inline double bsb_coupling(int n, const SidebandParams& params) {
    if (n < 0) throw std::invalid_argument("bsb_coupling: n must be >= 0");
    const double eta2 = params.eta * params.eta;
    return std::exp(-0.5 * eta2) * params.eta / std::sqrt(n + 1.0) * laguerre(n, 1.0, eta2);
}

// ------------------------------- states -------------------------------------

// Density matrix of the motional mode. `normalized` is false for conditioned
// (sub-normalized) states.
struct MotionalDensityMatrix {
    Eigen::MatrixXcd rho;
    bool normalized{true};

    static MotionalDensityMatrix fock(const FockSpace& space, Eigen::Index n) {
        if (n < 0 || n >= space.dim()) throw std::out_of_range("MotionalDensityMatrix::fock: level outside basis");
        MotionalDensityMatrix s{Eigen::MatrixXcd::Zero(space.dim(), space.dim()), true};
        s.rho(n, n) = 1.0;
        return s;
    }

    Eigen::Index dim() const noexcept { return rho.rows(); }
    double trace() const { return rho.trace().real(); }
    double tail_population() const { return rho(dim() - 1, dim() - 1).real(); }
    Eigen::VectorXd populations() const { return rho.diagonal().real(); }

    double mean_occupation() const {
        double m = 0.0;
        for (Eigen::Index n = 0; n < dim(); ++n) m += static_cast<double>(n) * rho(n, n).real();
        return m;
    }

    // Hermiticity, trace and positivity within the working tolerances.
    void check(double expected_trace = 1.0) const {
        if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > 1e-10)
            throw NumericalError("MotionalDensityMatrix: not Hermitian");
        const double tr = trace();
        if (normalized ? std::abs(tr - expected_trace) > 1e-8 : tr > 1.0 + 1e-8)
            throw NumericalError("MotionalDensityMatrix: trace " + std::to_string(tr) + " out of range");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -1e-8)
            throw NumericalError("MotionalDensityMatrix: negative eigenvalue");
    }
};

struct TrajectoryState {
    Eigen::VectorXcd amplitudes;
    bool normalized{true};

    static TrajectoryState fock(const FockSpace& space, Eigen::Index n) {
        if (n < 0 || n >= space.dim()) throw std::out_of_range("TrajectoryState::fock: level outside basis");
        TrajectoryState s{Eigen::VectorXcd::Zero(space.dim()), true};
        s.amplitudes(n) = 1.0;
        return s;
    }

    Eigen::Index dim() const noexcept { return amplitudes.size(); }
    double norm2() const { return amplitudes.squaredNorm(); }
    double tail_population() const { return std::norm(amplitudes(dim() - 1)) / norm2(); }

    double mean_occupation() const {
        double m = 0.0;
        for (Eigen::Index n = 0; n < dim(); ++n) m += static_cast<double>(n) * std::norm(amplitudes(n));
        return m / norm2();
    }
};

inline void check_truncation(const char* where, double tail, double cap) {
    if (tail > cap) throw TruncationError(where, tail, cap);
}

// ------------------------------- thermal state ------------------------------

struct ThermalState {
    MotionalDensityMatrix state;
    double leakage{0.0};          // sum of p_n over n >= n_cut before renormalizing
    bool leakage_warning{false};  // leakage > 1e-6
};

inline ThermalState thermal_state(double nbar, const FockSpace& space) {
    if (!(nbar >= 0.0)) throw std::invalid_argument("thermal_state: nbar must be >= 0");
    const Eigen::Index d = space.dim();
    ThermalState out;
    out.state.rho = Eigen::MatrixXcd::Zero(d, d);
    if (nbar == 0.0) {
        out.state.rho(0, 0) = 1.0;
        return out;
    }
    const double ratio = nbar / (1.0 + nbar);
    double p = 1.0 / (1.0 + nbar);
    double kept = 0.0;
    Eigen::VectorXd pops(d);
    for (Eigen::Index n = 0; n < d; ++n) {
        pops(n) = p;
        kept += p;
        p *= ratio;
    }
    out.leakage = std::pow(ratio, static_cast<double>(d));
    out.leakage_warning = out.leakage > 1e-6;
    for (Eigen::Index n = 0; n < d; ++n) out.state.rho(n, n) = pops(n) / kept;
    return out;
}

}  // namespace qfpt
