// estimators.hpp: multinomial statistics for measured first-passage data.
//
// Outcomes per trial are T_theta, ..., T_{(k-1)theta} and the censored
// T_{>= k theta}; the counts are multinomial, so the estimators are
// negatively correlated: Cov(p_i, p_j) = -p_i p_j / n for i != j.

#pragma once

#include "qfpt/common.hpp"
#include "qfpt/fpt_engine.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace qfpt {

struct TrialCounts {
    std::vector<std::uint64_t> counts;  // last bin: did not terminate
    std::uint64_t n{0};

    static TrialCounts from_counts(std::vector<std::uint64_t> c) {
        TrialCounts t{std::move(c), 0};
        for (auto x : t.counts) t.n += x;
        return t;
    }

    static TrialCounts from_result(const FptdResult& r) {
        if (r.mode != FptMode::monte_carlo) throw std::invalid_argument("TrialCounts: result has no counts");
        std::vector<std::uint64_t> c = r.counts;
        c.push_back(r.censored_count);
        return from_counts(std::move(c));
    }
};

struct EstimatedDistribution {
    Eigen::VectorXd p_hat;
    Eigen::MatrixXd cov;
    std::uint64_t n{0};
};

struct EstimatorOptions {
    bool add_half{false};  // Jeffreys-style pseudo-count per bin; keeps zero-count bins off zero variance
};

inline EstimatedDistribution multinomial_estimate(const TrialCounts& c, const EstimatorOptions& opt = {}) {
    if (c.n == 0) throw std::invalid_argument("multinomial_estimate: no trials");
    std::uint64_t total = 0;
    for (auto x : c.counts) total += x;
    if (total != c.n) throw std::invalid_argument("multinomial_estimate: counts do not sum to n");
    const auto k = static_cast<Eigen::Index>(c.counts.size());
    const double pseudo = opt.add_half ? 0.5 : 0.0;
    const double n = static_cast<double>(c.n) + pseudo * static_cast<double>(k);
    EstimatedDistribution d;
    d.n = c.n;
    d.p_hat.resize(k);
    for (Eigen::Index i = 0; i < k; ++i)
        d.p_hat(i) = (static_cast<double>(c.counts[static_cast<std::size_t>(i)]) + pseudo) / n;
    d.cov = -(d.p_hat * d.p_hat.transpose()) / n;
    d.cov.diagonal() = d.p_hat.array() * (1.0 - d.p_hat.array()) / n;
    return d;
}

struct EscapeCurve {
    std::vector<double> escape;    // E(i theta), i = 1..k-1
    std::vector<double> variance;  // a_i Cov a_i^T
    std::vector<double> sigma;
};

inline EscapeCurve escape_with_errors(const EstimatedDistribution& d) {
    const Eigen::Index k = d.p_hat.size();
    EscapeCurve out;
    for (Eigen::Index i = 1; i < k; ++i) {
        // a_i = (1,...,1,0,...,0) with i leading ones.
        const double e = d.p_hat.head(i).sum();
        const double var = std::max(d.cov.topLeftCorner(i, i).sum(), 0.0);
        out.escape.push_back(e);
        out.variance.push_back(var);
        out.sigma.push_back(std::sqrt(var));
    }
    return out;
}

// ------------------------------ comparisons ---------------------------------

struct DistributionComparison {
    double tv_distance{0.0};
    double tv_stderr{0.0};        // (1/2) sum_i sqrt(var_a,i + var_b,i)
    std::vector<double> z_scores; // per bin, censored bin last
    double max_abs_z{0.0};
};

namespace detail {

struct Binned {
    std::vector<double> p;
    std::vector<double> var;
};

inline Binned binned(const FptdResult& r) {
    Binned b{r.probs, std::vector<double>(r.probs.size() + 1, 0.0)};
    b.p.push_back(r.survivor_remainder);
    if (r.mode == FptMode::monte_carlo && r.trials > 0)
        for (std::size_t i = 0; i < b.p.size(); ++i) b.var[i] = b.p[i] * (1.0 - b.p[i]) / static_cast<double>(r.trials);
    return b;
}

inline Binned binned(const EstimatedDistribution& d) {
    Binned b;
    for (Eigen::Index i = 0; i < d.p_hat.size(); ++i) {
        b.p.push_back(d.p_hat(i));
        b.var.push_back(d.cov(i, i));
    }
    return b;
}

inline DistributionComparison compare(const Binned& a, const Binned& b) {
    if (a.p.size() != b.p.size()) throw std::invalid_argument("compare_distributions: grid mismatch");
    DistributionComparison c;
    for (std::size_t i = 0; i < a.p.size(); ++i) {
        const double diff = a.p[i] - b.p[i];
        const double sd = std::sqrt(a.var[i] + b.var[i]);
        c.tv_distance += 0.5 * std::abs(diff);
        c.tv_stderr += 0.5 * sd;
        double z = 0.0;
        if (sd > 0.0) z = diff / sd;
        else if (diff != 0.0) z = std::copysign(std::numeric_limits<double>::infinity(), diff);
        c.z_scores.push_back(z);
        c.max_abs_z = std::max(c.max_abs_z, std::abs(z));
    }
    return c;
}

}  // namespace detail

inline DistributionComparison compare_distributions(const FptdResult& a, const FptdResult& b) {
    if (a.theta != b.theta) throw std::invalid_argument("compare_distributions: theta mismatch");
    return detail::compare(detail::binned(a), detail::binned(b));
}

inline DistributionComparison compare_distributions(const FptdResult& a, const EstimatedDistribution& b) {
    return detail::compare(detail::binned(a), detail::binned(b));
}

// ------------------------------- bootstrap ----------------------------------

struct BootstrapCovariance {
    Eigen::MatrixXd cov;
    Eigen::MatrixXd entry_stderr;  // standard error of each covariance entry
};

// Parametric multinomial bootstrap around p_hat, one derived stream per resample.
inline BootstrapCovariance bootstrap_covariance(const TrialCounts& c, std::uint64_t resamples, std::uint64_t seed,
                                                unsigned threads = 0) {
    const auto est = multinomial_estimate(c);
    const Eigen::Index k = est.p_hat.size();
    Eigen::MatrixXd draws(k, static_cast<Eigen::Index>(resamples));
    parallel_for(static_cast<std::size_t>(resamples), threads, [&](std::size_t b) {
        Rng rng = make_rng(seed, b);
        std::uint64_t left = c.n;
        double mass_left = 1.0;
        for (Eigen::Index i = 0; i < k; ++i) {
            std::uint64_t x = left;
            if (i + 1 < k && left > 0) {
                const double q = mass_left > 0.0 ? std::clamp(est.p_hat(i) / mass_left, 0.0, 1.0) : 0.0;
                x = std::binomial_distribution<std::uint64_t>(left, q)(rng);
            }
            draws(i, static_cast<Eigen::Index>(b)) = static_cast<double>(x) / static_cast<double>(c.n);
            left -= x;
            mass_left -= est.p_hat(i);
        }
    });
    const double nb = static_cast<double>(resamples);
    const Eigen::VectorXd mean = draws.rowwise().mean();
    const Eigen::MatrixXd centered = draws.colwise() - mean;
    BootstrapCovariance out;
    out.cov = centered * centered.transpose() / nb;
    out.entry_stderr.resize(k, k);
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < k; ++j) {
            const Eigen::ArrayXd prod = centered.row(i).array() * centered.row(j).array();
            const double m = prod.mean();
            out.entry_stderr(i, j) = std::sqrt(std::max((prod - m).square().mean(), 0.0) / nb);
        }
    return out;
}

}  // namespace qfpt
