#include "qfpt/estimators.hpp"
#include "qfpt/fpt_engine.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace qfpt;

namespace {

TrialCounts random_counts(std::uint64_t seed, int bins, std::uint64_t n) {
    Rng rng = make_rng(seed, 0);
    std::vector<double> w(static_cast<std::size_t>(bins));
    for (auto& x : w) x = 0.1 + uniform01(rng);
    std::discrete_distribution<int> pick(w.begin(), w.end());
    std::vector<std::uint64_t> c(static_cast<std::size_t>(bins), 0);
    for (std::uint64_t k = 0; k < n; ++k) ++c[static_cast<std::size_t>(pick(rng))];
    return TrialCounts::from_counts(c);
}

FptdResult sampled_geometric(double theta, int steps, std::uint64_t trials, std::uint64_t seed) {
    const double p = theta / (1 + theta);
    Rng rng = make_rng(seed, 0);
    std::geometric_distribution<int> geo(p);
    std::vector<int> first;
    for (std::uint64_t k = 0; k < trials; ++k) {
        const int s = geo(rng) + 1;
        first.push_back(s <= steps ? s : 0);
    }
    return result_from_first_bright(first, steps, theta);
}

}  // namespace

TEST(Multinomial, DegenerateCounts) {
    const auto d = multinomial_estimate(TrialCounts::from_counts({4, 0, 0}));
    EXPECT_EQ(d.p_hat, Eigen::Vector3d(1.0, 0.0, 0.0));
    EXPECT_EQ(d.cov.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Multinomial, WorkedExample) {
    const auto d = multinomial_estimate(TrialCounts::from_counts({2, 1, 1}));
    EXPECT_DOUBLE_EQ(d.p_hat(0), 0.5);
    EXPECT_DOUBLE_EQ(d.p_hat(1), 0.25);
    EXPECT_DOUBLE_EQ(d.p_hat(2), 0.25);
    EXPECT_DOUBLE_EQ(d.cov(0, 0), 0.0625);
    EXPECT_DOUBLE_EQ(d.cov(0, 1), -0.03125);
    EXPECT_DOUBLE_EQ(d.cov(1, 0), -0.03125);
}

TEST(Multinomial, RejectsEmptyAndInconsistent) {
    EXPECT_THROW(multinomial_estimate(TrialCounts::from_counts({0, 0})), std::invalid_argument);
    EXPECT_THROW(multinomial_estimate(TrialCounts{{1, 2}, 5}), std::invalid_argument);
}

TEST(Multinomial, RowSumsVanish) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto d = multinomial_estimate(random_counts(seed, 12, 997));
        EXPECT_NEAR(d.p_hat.sum(), 1.0, 1e-14);
        EXPECT_TRUE(d.cov.isApprox(d.cov.transpose(), 0.0));
        for (Eigen::Index i = 0; i < d.cov.rows(); ++i) EXPECT_NEAR(d.cov.row(i).sum(), 0.0, 1e-12);
    }
}

TEST(Multinomial, SemidefiniteWithOneNullDirection) {
    const auto d = multinomial_estimate(random_counts(3, 8, 5000));
    ASSERT_GT(d.p_hat.minCoeff(), 0.0);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(d.cov);
    const auto ev = es.eigenvalues();
    const double scale = ev.maxCoeff();
    EXPECT_NEAR(ev(0), 0.0, 1e-12 * scale);
    for (Eigen::Index i = 1; i < ev.size(); ++i) EXPECT_GT(ev(i), 1e-6 * scale);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(d.cov.rows()) / std::sqrt(static_cast<double>(d.cov.rows()));
    EXPECT_NEAR(std::abs(es.eigenvectors().col(0).dot(ones)), 1.0, 1e-9);
}

TEST(Multinomial, AddHalfSmoothing) {
    const auto raw = multinomial_estimate(TrialCounts::from_counts({4, 0, 0}));
    const auto smooth = multinomial_estimate(TrialCounts::from_counts({4, 0, 0}), EstimatorOptions{true});
    EXPECT_DOUBLE_EQ(smooth.p_hat(0), 4.5 / 5.5);
    EXPECT_DOUBLE_EQ(smooth.p_hat(1), 0.5 / 5.5);
    EXPECT_GT(smooth.cov(1, 1), 0.0);
    EXPECT_EQ(raw.cov(1, 1), 0.0);
    for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(smooth.cov.row(i).sum(), 0.0, 1e-15);
}

TEST(Escape, WorkedExample) {
    const auto c = escape_with_errors(multinomial_estimate(TrialCounts::from_counts({2, 1, 1})));
    ASSERT_EQ(c.escape.size(), 2u);
    EXPECT_DOUBLE_EQ(c.escape[1], 0.75);
    EXPECT_NEAR(c.variance[1], 0.046875, 1e-15);
}

TEST(Escape, QuadraticFormEqualsBinomialCollapse) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto counts = random_counts(seed, 15, 1234);
        const auto c = escape_with_errors(multinomial_estimate(counts));
        const double n = static_cast<double>(counts.n);
        for (std::size_t i = 0; i < c.escape.size(); ++i)
            EXPECT_NEAR(c.variance[i], c.escape[i] * (1 - c.escape[i]) / n, 1e-12);
    }
}

TEST(Escape, ExtremesHaveZeroSigma) {
    const auto c = escape_with_errors(multinomial_estimate(TrialCounts::from_counts({0, 0, 7, 0})));
    EXPECT_EQ(c.sigma[0], 0.0);
    EXPECT_EQ(c.sigma[1], 0.0);
    EXPECT_EQ(c.sigma[2], 0.0);
    EXPECT_EQ(c.escape[2], 1.0);
}

TEST(Escape, SigmaPeaksAtHalf) {
    const auto c = escape_with_errors(multinomial_estimate(TrialCounts::from_counts({10, 20, 20, 30, 20})));
    std::size_t arg = 0;
    for (std::size_t i = 1; i < c.sigma.size(); ++i)
        if (c.sigma[i] > c.sigma[arg]) arg = i;
    EXPECT_DOUBLE_EQ(c.escape[arg], 0.5);
}

TEST(Bootstrap, MatchesAnalyticCovariance) {
    const auto counts = TrialCounts::from_counts({300, 200, 150, 250, 100});
    const auto d = multinomial_estimate(counts);
    const auto b = bootstrap_covariance(counts, 100000, 13);
    for (Eigen::Index i = 0; i < d.cov.rows(); ++i)
        for (Eigen::Index j = 0; j < d.cov.cols(); ++j)
            EXPECT_LT(std::abs(b.cov(i, j) - d.cov(i, j)), 5.0 * b.entry_stderr(i, j)) << i << "," << j;
    EXPECT_LT(b.cov(0, 1), 0.0);
}

TEST(Bootstrap, DeterministicAcrossThreads) {
    const auto counts = TrialCounts::from_counts({5, 3, 2});
    const auto a = bootstrap_covariance(counts, 2000, 4, 1);
    const auto b = bootstrap_covariance(counts, 2000, 4, 3);
    EXPECT_EQ(a.cov, b.cov);
}

TEST(Compare, IdenticalInputs) {
    const auto g = geometric_reference(0.43, 20);
    const auto c = compare_distributions(g, g);
    EXPECT_EQ(c.tv_distance, 0.0);
    EXPECT_EQ(c.max_abs_z, 0.0);
}

TEST(Compare, DisjointSupport) {
    FptdResult a, b;
    a.theta = b.theta = 0.5;
    a.probs = {1.0, 0.0, 0.0};
    b.probs = {0.0, 0.0, 1.0};
    EXPECT_DOUBLE_EQ(compare_distributions(a, b).tv_distance, 1.0);
}

TEST(Compare, GridMismatch) {
    EXPECT_THROW(compare_distributions(geometric_reference(0.43, 20), geometric_reference(0.43, 21)),
                 std::invalid_argument);
    EXPECT_THROW(compare_distributions(geometric_reference(0.43, 20), geometric_reference(0.5, 20)),
                 std::invalid_argument);
}

TEST(Compare, IndependentSamplesAreCalibrated) {
    int exceed = 0;
    const int runs = 20;
    for (int k = 0; k < runs; ++k) {
        const auto a = sampled_geometric(0.43, 15, 100000, 100 + 2 * k);
        const auto b = sampled_geometric(0.43, 15, 100000, 101 + 2 * k);
        exceed += compare_distributions(a, b).max_abs_z >= 4.0;
    }
    EXPECT_EQ(exceed, 0);
}

TEST(Compare, AgainstEstimatedDistribution) {
    const auto g = geometric_reference(0.43, 10);
    const auto s = sampled_geometric(0.43, 10, 50000, 7);
    const auto d = multinomial_estimate(TrialCounts::from_result(s));
    const auto c = compare_distributions(g, d);
    EXPECT_LT(c.max_abs_z, 4.5);
    EXPECT_NEAR(c.tv_distance, compare_distributions(s, g).tv_distance, 1e-15);
}
