#include "qfpt/estimators.hpp"
#include "qfpt/fpt_engine.hpp"
#include "qfpt/pulse_table.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace qfpt;

namespace {

FptConfig ideal_config(int n_b, double theta, int steps) {
    FptConfig c;
    c.n_b = n_b;
    c.theta = theta;
    c.max_steps = steps;
    return c;
}

double total_mass(const FptdResult& r) {
    return std::accumulate(r.probs.begin(), r.probs.end(), 0.0) + r.survivor_remainder;
}

FptdResult random_result(std::uint64_t seed, int steps) {
    Rng rng = make_rng(seed, 0);
    FptdResult r;
    r.theta = 0.2 + uniform01(rng);
    std::vector<double> w(static_cast<std::size_t>(steps) + 1);
    double sum = 0.0;
    for (auto& x : w) sum += (x = 0.05 + uniform01(rng));
    for (int i = 0; i < steps; ++i) r.probs.push_back(w[static_cast<std::size_t>(i)] / sum);
    r.survivor_remainder = w.back() / sum;
    return finalize(r);
}

const PulseSequence& reference(int n_b, int m_p) {
    static const auto table = reference_pulse_table();
    for (const auto& s : table)
        if (s.n_b_target == n_b && static_cast<int>(s.size()) == m_p) return s;
    throw std::logic_error("missing reference row");
}

}  // namespace

TEST(Ideal, SingleLevelIsGeometric) {
    const auto r = qfptd_ideal(ideal_config(1, 0.43, 60));
    const double p = 0.43 / 1.43;
    EXPECT_NEAR(p, 0.300699, 5e-7);
    for (int k = 1; k <= 60; ++k)
        EXPECT_NEAR(r.probs[static_cast<std::size_t>(k - 1)], p * std::pow(1 - p, k - 1), 1e-6) << k;
    EXPECT_NEAR(total_mass(r), 1.0, 1e-8);
}

TEST(Ideal, MassIsConserved) {
    for (int nb : {2, 3}) {
        const auto r = qfptd_ideal(ideal_config(nb, 0.3, 25));
        EXPECT_NEAR(total_mass(r), 1.0, 1e-8);
        for (double x : r.probs) EXPECT_GE(x, 0.0);
    }
}

TEST(Ideal, GeometricMeanAtUnitInterval) {
    const auto r = qfptd_ideal(ideal_config(1, 1.0, 40));
    EXPECT_LT(r.survivor_remainder, 1e-9);
    EXPECT_NEAR(moments(r).mean, 2.0, 1e-6);
}

TEST(Ideal, ProductFormulaMatchesDirectFlux) {
    IdealDiagnostics diag;
    const auto r = qfptd_ideal(ideal_config(3, 0.43, 20), &diag);
    ASSERT_EQ(diag.direct_flux.size(), r.probs.size());
    for (std::size_t i = 0; i < r.probs.size(); ++i) EXPECT_NEAR(diag.direct_flux[i], r.probs[i], 1e-10);
}

TEST(Ideal, SurvivalConditioningRemovesEnergy) {
    for (int nb : {2, 4}) {
        IdealDiagnostics diag;
        qfptd_ideal(ideal_config(nb, 0.5, 15), &diag);
        for (std::size_t i = 0; i < diag.energy_before.size(); ++i)
            EXPECT_LE(diag.energy_after[i], diag.energy_before[i] + 1e-12) << i;
    }
}

TEST(Ideal, BallisticOnsetBelowGeometric) {
    for (int nb : {2, 3}) {
        for (double theta : {0.02, 0.05}) {
            const auto r = qfptd_ideal(ideal_config(nb, theta, 3));
            const auto g = geometric_reference(theta, 3);
            EXPECT_LT(10.0 * r.probs[0], g.probs[0]) << nb << " " << theta;
        }
    }
}

TEST(Ideal, HalvingIntervalEnhancesEscape) {
    for (int nb : {2, 3}) {
        const auto coarse = qfptd_ideal(ideal_config(nb, 0.86, 20));
        const auto fine = qfptd_ideal(ideal_config(nb, 0.43, 40));
        bool strict = false;
        for (std::size_t i = 0; i < coarse.escape.size(); ++i) {
            const double ef = fine.escape[2 * i + 1];
            EXPECT_GE(ef, coarse.escape[i] - 1e-12);
            strict = strict || ef > coarse.escape[i] + 1e-6;
        }
        EXPECT_TRUE(strict);
    }
}

TEST(Ideal, ThermalStartDetectsEarlier) {
    auto cold = ideal_config(2, 0.3, 10);
    auto warm = cold;
    warm.initial_nbar = 0.5;
    EXPECT_GT(qfptd_ideal(warm).probs[0], qfptd_ideal(cold).probs[0]);
}

TEST(Ideal, TruncationIsReported) {
    auto c = ideal_config(1, 8.0, 3);
    c.n_cut = 12;
    EXPECT_THROW(qfptd_ideal(c), TruncationError);
    c.n_cut = 1;
    EXPECT_THROW(qfptd_ideal(c), std::invalid_argument);
}

TEST(Escape, SingleStepAndPadding) {
    FptdResult r;
    r.theta = 0.5;
    r.probs = {0.3};
    r.survivor_remainder = 0.7;
    finalize(r);
    EXPECT_EQ(r.escape[0], 0.3);
    FptdResult padded = r;
    padded.probs.push_back(0.0);
    padded.probs.push_back(0.0);
    finalize(padded);
    EXPECT_EQ(padded.escape[0], r.escape[0]);
    EXPECT_EQ(padded.escape.back(), r.escape.back());
}

TEST(Moments, DeltaDistribution) {
    FptdResult r;
    r.theta = 0.5;
    r.probs = {0.0, 0.0, 1.0, 0.0};
    const auto m = moments(r);
    EXPECT_DOUBLE_EQ(m.mean, 1.5);
    EXPECT_DOUBLE_EQ(m.second_moment, 2.25);
    EXPECT_FALSE(m.censoring_warning);
    r.survivor_remainder = 0.01;
    EXPECT_TRUE(moments(r).censoring_warning);
}

TEST(Moments, AnalyticQuantumMoments) {
    const auto m1 = analytic_quantum_moments(1), m2 = analytic_quantum_moments(2), m3 = analytic_quantum_moments(3);
    EXPECT_EQ(m1.mean, 1.0);
    EXPECT_EQ(m1.second_moment, 2.0);
    EXPECT_EQ(m2.mean, 2.0);
    EXPECT_EQ(m2.second_moment, 7.0);
    EXPECT_EQ(m3.mean, 3.0);
    EXPECT_EQ(m3.second_moment, 15.0);
    EXPECT_THROW(analytic_quantum_moments(0), std::invalid_argument);
}

TEST(Geometric, ReferenceLaw) {
    const auto g = geometric_reference(0.43, 30);
    EXPECT_NEAR(g.probs[0], 0.300699, 5e-7);
    EXPECT_EQ(total_mass(g), 1.0);
    const auto tiny = geometric_reference(1e-4, 200000);
    EXPECT_NEAR(moments(tiny).mean, 1.0 + 1e-4, 1e-3);
}

TEST(TailFit, GeometricTailIsExact) {
    const double theta = 0.43, p = theta / (1 + theta);
    const auto fit = tail_fit(geometric_reference(theta, 40), 2.0);
    EXPECT_NEAR(fit.beta, -std::log(1 - p) / theta, 1e-9);
    EXPECT_NEAR(fit.r_squared, 1.0, 1e-12);
}

TEST(TailFit, SampledExponentialTail) {
    const double theta = 0.25, p = theta / (1 + theta);
    std::vector<int> steps;
    Rng rng = make_rng(31, 0);
    std::geometric_distribution<int> geo(p);
    for (int k = 0; k < 200000; ++k) {
        const int s = geo(rng) + 1;
        steps.push_back(s <= 60 ? s : 0);
    }
    const auto r = result_from_first_bright(steps, 60, theta);
    const auto fit = tail_fit(r, 1.0);
    EXPECT_NEAR(fit.beta, -std::log(1 - p) / theta, 0.03 * fit.beta);
}

TEST(TailFit, IdealThreeLevelTailIsExponential) {
    const auto r = qfptd_ideal(ideal_config(3, 0.1, 300));
    const auto fit = tail_fit(r, 6.0);
    EXPECT_GT(fit.r_squared, 0.99);
    EXPECT_GT(fit.beta, 0.0);
}

TEST(TailFit, NeedsEnoughPoints) {
    EXPECT_THROW(tail_fit(geometric_reference(0.5, 4), 0.0), NumericalError);
}

TEST(Spont, FalseBrightProbability) {
    const SpontEmissionModel m{1.2, 86.0};
    EXPECT_NEAR(m.false_bright_probability(0.43), 0.004158, 1e-6);
}

TEST(Spont, FalseBrightMatchesDecayMonteCarlo) {
    const SpontEmissionModel m{1.2, 86.0};
    const double interval_s = 0.43 / 86.0;
    std::exponential_distribution<double> life(1.0 / 1.2);
    Rng rng = make_rng(8, 0);
    const int n = 2000000;
    int decayed = 0;
    for (int k = 0; k < n; ++k) decayed += life(rng) < interval_s;
    const double p = m.false_bright_probability(0.43);
    EXPECT_LT(std::abs(static_cast<double>(decayed) / n - p), 4.0 * std::sqrt(p * (1 - p) / n));
}

TEST(Spont, InfiniteLifetimeIsIdentity) {
    const SpontEmissionModel m{1e300, 86.0};
    const auto g = geometric_reference(0.43, 20);
    const auto f = spont_forward(g, m);
    for (std::size_t i = 0; i < g.probs.size(); ++i) EXPECT_NEAR(f.probs[i], g.probs[i], 1e-15);
}

TEST(Spont, RoundTripsAreIdentity) {
    const SpontEmissionModel m{1.2, 86.0};
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto x = random_result(seed, 25);
        const auto there_back = spont_reconstruct(spont_forward(x, m), m);
        const auto back_there = spont_forward(spont_reconstruct(spont_forward(x, m), m), m);
        const auto fx = spont_forward(x, m);
        for (std::size_t i = 0; i < x.probs.size(); ++i) {
            EXPECT_NEAR(there_back.probs[i], x.probs[i], 1e-10);
            EXPECT_NEAR(back_there.probs[i], fx.probs[i], 1e-10);
        }
        EXPECT_NEAR(there_back.survivor_remainder, x.survivor_remainder, 1e-10);
        EXPECT_NEAR(total_mass(fx), 1.0, 1e-12);
    }
}

TEST(Spont, ObservedEscapeDominatesTruth) {
    const double theta = 0.43;
    const SpontEmissionModel m{theta / (86.0 * -std::log(0.9958)), 86.0};
    EXPECT_NEAR(m.survival_factor(theta), 0.9958, 1e-12);
    const auto g = geometric_reference(theta, 30);
    const auto o = spont_forward(g, m);
    for (std::size_t i = 0; i < g.escape.size(); ++i) EXPECT_GT(o.escape[i], g.escape[i]);
}

TEST(Spont, NegativeHazardIsAnError) {
    const SpontEmissionModel m{0.01, 86.0};  // s ~ 0.61: far more false brights than a clean law allows
    const auto g = geometric_reference(0.43, 10);
    EXPECT_THROW(spont_reconstruct(g, m), NumericalError);
    const auto clamped = spont_reconstruct(g, m, ReconstructOptions{true});
    for (double x : clamped.probs) EXPECT_GE(x, 0.0);
}

TEST(Realistic, PerfectStepMatchesIdealPointwise) {
    auto cfg = ideal_config(2, 0.43, 30);
    const auto ideal = qfptd_ideal(cfg);
    RealisticOptions ro;
    ro.measurement = StepMeasurement::perfect(cfg.space(), 2);
    ro.trials = 100000;
    ro.seed = 2;
    const auto mc = qfptd_realistic(cfg, ro);
    const auto se = mc.stderrs();
    for (std::size_t i = 0; i < ideal.probs.size(); ++i) {
        const double sd = std::max(se[i], std::sqrt(ideal.probs[i] * (1 - ideal.probs[i]) / 1e5));
        EXPECT_LT(std::abs(mc.probs[i] - ideal.probs[i]), 4.0 * sd) << "step " << i + 1;
    }
    EXPECT_LT(compare_distributions(mc, ideal).tv_distance, 4.0 * compare_distributions(mc, ideal).tv_stderr);
}

TEST(Realistic, ReferencePulsesNeverDelayEscape) {
    auto cfg = ideal_config(2, 0.43, 30);
    const auto ideal = qfptd_ideal(cfg);
    RealisticOptions ro;
    ro.measurement = reference(2, 9);
    ro.trials = 40000;
    ro.seed = 3;
    const auto mc = qfptd_realistic(cfg, ro);
    const auto curve = escape_with_errors(multinomial_estimate(TrialCounts::from_result(mc)));
    for (std::size_t i = 0; i < ideal.escape.size(); ++i)
        EXPECT_GE(curve.escape[i], ideal.escape[i] - 4.0 * curve.sigma[i]) << i;
}

TEST(Realistic, DeterministicAcrossThreadCounts) {
    auto cfg = ideal_config(2, 0.43, 20);
    RealisticOptions ro;
    ro.measurement = reference(2, 10);
    ro.noise = IntensityNoise{0.13};
    ro.spont = SpontEmissionModel{};
    ro.detection_error = 1e-3;
    ro.trials = 3000;
    ro.seed = 17;
    ro.threads = 1;
    const auto a = qfptd_realistic(cfg, ro);
    ro.threads = 4;
    const auto b = qfptd_realistic(cfg, ro);
    EXPECT_EQ(a.counts, b.counts);
    EXPECT_EQ(a.censored_count, b.censored_count);
}

TEST(Realistic, ReadoutImperfectionsAddEarlyBrights) {
    auto cfg = ideal_config(3, 0.43, 10);
    RealisticOptions ro;
    ro.measurement = StepMeasurement::perfect(cfg.space(), 3);
    ro.trials = 20000;
    const auto clean = qfptd_realistic(cfg, ro);
    ro.detection_error = 0.05;
    const auto noisy = qfptd_realistic(cfg, ro);
    EXPECT_GT(noisy.probs[0], clean.probs[0] + 0.03);
}

TEST(Realistic, RejectsInconsistentOptions) {
    auto cfg = ideal_config(2, 0.43, 5);
    RealisticOptions ro;
    ro.measurement = StepMeasurement::perfect(cfg.space(), 2);
    ro.noise = IntensityNoise{0.1};
    EXPECT_THROW(qfptd_realistic(cfg, ro), std::invalid_argument);
    ro.noise = IntensityNoise{};
    ro.detection_error = 0.6;
    EXPECT_THROW(qfptd_realistic(cfg, ro), std::invalid_argument);
    ro.detection_error = 0.0;
    ro.measurement = StepMeasurement::perfect(FockSpace(10), 2);
    EXPECT_THROW(qfptd_realistic(cfg, ro), std::invalid_argument);
}

TEST(FirstBright, CountsAndCensoring) {
    const auto r = result_from_first_bright({1, 2, 2, 0, 3}, 3, 0.5);
    EXPECT_EQ(r.counts, (std::vector<std::uint64_t>{1, 2, 1}));
    EXPECT_EQ(r.censored_count, 1u);
    EXPECT_DOUBLE_EQ(r.survivor_remainder, 0.2);
    EXPECT_THROW(result_from_first_bright({4}, 3, 0.5), std::invalid_argument);
}
