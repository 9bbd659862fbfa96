// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <sstream>

#include "climgan/eval.hpp"

using namespace climgan;

namespace {

SampleSet gaussian(std::size_t n, std::size_t d, double shift, Rng& rng) {
    Eigen::MatrixXd x(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) x(i, j) = rng.normal() + shift;
    return SampleSet(std::move(x));
}

SampleSet column(std::initializer_list<double> v) {
    Eigen::MatrixXd x(v.size(), 1);
    std::size_t i = 0;
    for (double e : v) x(i++, 0) = e;
    return SampleSet(std::move(x));
}

double k_ref(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b, double bw) {
    double s = 0;
    for (Eigen::Index i = 0; i < a.size(); ++i) s += (a(i) - b(i)) * (a(i) - b(i));
    return std::exp(-s / (2 * bw * bw));
}

double mmd_ref(const SampleSet& x, const SampleSet& y, double bw) {
    const double n = x.size(), m = y.size();
    double xx = 0, yy = 0, xy = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < x.size(); ++j)
            if (i != j) xx += k_ref(x.x.row(i), x.x.row(j), bw);
    for (std::size_t i = 0; i < y.size(); ++i)
        for (std::size_t j = 0; j < y.size(); ++j)
            if (i != j) yy += k_ref(y.x.row(i), y.x.row(j), bw);
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < y.size(); ++j) xy += k_ref(x.x.row(i), y.x.row(j), bw);
    return xx / (n * (n - 1)) + yy / (m * (m - 1)) - 2 * xy / (n * m);
}

}  // namespace

TEST(Mmd, ClosedFormTwoPointExample) {
    EXPECT_NEAR(mmd2_unbiased(column({0, 0}), column({2, 2}), std::sqrt(2.0)), 2 - 2 * std::exp(-1.0), 1e-12);
    EXPECT_NEAR(mmd2_unbiased(column({0, 0}), column({2, 2}), std::sqrt(2.0)), 1.26424, 1e-5);
}

TEST(Mmd, MatchesDoubleLoopOracle) {
    Rng rng(1);
    const auto x = gaussian(7, 3, 0, rng), y = gaussian(9, 3, 0.5, rng);
    EXPECT_NEAR(mmd2_unbiased(x, y, 1.3), mmd_ref(x, y, 1.3), 1e-12);
}

TEST(Mmd, SymmetricAndPermutationInvariant) {
    Rng rng(2);
    const auto x = gaussian(8, 2, 0, rng), y = gaussian(6, 2, 1, rng);
    const double a = mmd2_unbiased(x, y, 1.0);
    EXPECT_NEAR(mmd2_unbiased(y, x, 1.0), a, 1e-12);
    SampleSet xr(x.x.colwise().reverse());
    EXPECT_NEAR(mmd2_unbiased(xr, y, 1.0), a, 1e-12);
}

// The cross term keeps the i == j pairs, so X against itself lands at or
// below zero rather than exactly on it.
TEST(Mmd, SelfComparisonIsNonPositive) {
    Rng rng(3);
    const auto x = gaussian(10, 4, 0, rng);
    const double v = mmd2_unbiased(x, x, 2.0);
    EXPECT_LE(v, 0.0);
    EXPECT_NEAR(v, mmd_ref(x, x, 2.0), 1e-12);
}

TEST(Mmd, Preconditions) {
    EXPECT_THROW(mmd2_unbiased(column({0}), column({1, 2}), 1.0), std::invalid_argument);
    EXPECT_THROW(mmd2_unbiased(column({0, 1}), column({1, 2}), 0.0), std::invalid_argument);
    EXPECT_THROW(mmd2_unbiased(column({0, 1}), column({1, 2}), -1.0), std::invalid_argument);
    Rng rng(4);
    EXPECT_THROW(mmd2_unbiased(gaussian(3, 2, 0, rng), gaussian(3, 3, 0, rng), 1.0), ShapeError);
}

TEST(MedianBandwidth, HandExample) {
    // Pooled {0, 1, 3, 3}: pair distances {1, 3, 3, 2, 2, 0}.
    EXPECT_DOUBLE_EQ(median_bandwidth(column({0, 1}), column({3, 3})), 2.0);
    EXPECT_DOUBLE_EQ(median_bandwidth(column({5, 5}), column({5, 5})), 1.0);
}

TEST(Me, SingleLocationIsStandardizedMeanDifference) {
    const auto x = column({0.0, 0.5, 1.0, 1.5}), y = column({2.0, 2.2, 3.0, 2.6});
    Eigen::MatrixXd w(1, 1);
    w << 1.2;
    const double bw = 0.9;
    auto feat = [&](double v) { return std::exp(-(v - 1.2) * (v - 1.2) / (2 * bw * bw)); };
    auto moments = [&](std::initializer_list<double> s, double& mean, double& var) {
        mean = 0;
        for (double v : s) mean += feat(v) / 4;
        var = 0;
        for (double v : s) var += (feat(v) - mean) * (feat(v) - mean) / 3;
    };
    double mx, vx, my, vy;
    moments({0.0, 0.5, 1.0, 1.5}, mx, vx);
    moments({2.0, 2.2, 3.0, 2.6}, my, vy);
    const double expected = (mx - my) * (mx - my) / (vx / 4 + vy / 4 + kMeRidge);
    EXPECT_NEAR(me_statistic(x, y, w, bw), expected, 1e-9 * expected);
}

TEST(Me, IdenticalSetsGiveZeroAndNonnegative) {
    Rng rng(5);
    const auto x = gaussian(20, 3, 0, rng);
    EXPECT_NEAR(me_statistic(x, x, 5, 1.5, rng), 0.0, 1e-12);
    for (int t = 0; t < 20; ++t) EXPECT_GE(me_statistic(gaussian(10, 3, 0, rng), gaussian(12, 3, 0.2, rng), 5, 1.5, rng), 0.0);
}

TEST(Me, ZeroLocationsRejected) {
    Rng rng(6);
    EXPECT_THROW(me_statistic(gaussian(5, 2, 0, rng), gaussian(5, 2, 0, rng), 0, 1.0, rng), std::invalid_argument);
}

TEST(Me, DetectsShiftViaChiSquared) {
    Rng rng(7);
    const auto r = me_test(gaussian(200, 3, 0, rng), gaussian(200, 3, 1.0, rng), 5, 0.0, 0.05, rng);
    EXPECT_TRUE(r.reject);
    EXPECT_LT(r.p_value, 1e-6);
}

TEST(ChiSquared, SurvivalMatchesKnownQuantiles) {
    EXPECT_NEAR(chi_squared_sf(3.841458820694124, 1), 0.05, 1e-9);
    EXPECT_NEAR(chi_squared_sf(11.070497693516351, 5), 0.05, 1e-9);
    EXPECT_DOUBLE_EQ(chi_squared_sf(0.0, 5), 1.0);
}

TEST(Permutation, RejectsLargeShift) {
    Rng rng(8);
    const auto x = gaussian(100, 2, 5, rng), y = gaussian(100, 2, 0, rng);
    MmdStatistic s;
    const auto r = permutation_test(s, x, y, 99, 0.05, rng);
    EXPECT_TRUE(r.reject);
    EXPECT_DOUBLE_EQ(r.p_value, 1.0 / 100);
}

TEST(Permutation, PValueBoundsAndReproducibility) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng gen(seed);
        const auto x = gaussian(12, 2, 0, gen), y = gaussian(12, 2, 0, gen);
        MmdStatistic s(1.0);
        Rng a(seed + 100), b(seed + 100);
        const auto ra = permutation_test(s, x, y, 99, 0.05, a), rb = permutation_test(s, x, y, 99, 0.05, b);
        EXPECT_GE(ra.p_value, 1.0 / 100);
        EXPECT_LE(ra.p_value, 1.0);
        EXPECT_EQ(ra.p_value, rb.p_value);
        EXPECT_EQ(ra.statistic, rb.statistic);
        EXPECT_LE(ra.null_quantiles[0], ra.null_quantiles[1]);
        EXPECT_LE(ra.null_quantiles[1], ra.null_quantiles[2]);
    }
}

TEST(Permutation, StatisticMatchesDirectEstimator) {
    Rng rng(9);
    const auto x = gaussian(9, 3, 0, rng), y = gaussian(11, 3, 0.3, rng);
    MmdStatistic s(0.8);
    EXPECT_NEAR(permutation_test(s, x, y, 99, 0.05, rng).statistic, mmd_ref(x, y, 0.8), 1e-12);
}

TEST(Permutation, ConvergesBetween199And999) {
    Rng gen(10);
    const auto x = gaussian(30, 2, 0, gen), y = gaussian(30, 2, 0.3, gen);
    MmdStatistic s;
    Rng a(1), b(2);
    const double p199 = permutation_test(s, x, y, 199, 0.05, a).p_value;
    const double p999 = permutation_test(s, x, y, 999, 0.05, b).p_value;
    EXPECT_LT(std::abs(p199 - p999), 0.05);
}

TEST(Permutation, TooFewPermutationsRejected) {
    Rng rng(11);
    MmdStatistic s;
    EXPECT_THROW(permutation_test(s, gaussian(5, 1, 0, rng), gaussian(5, 1, 0, rng), 50, 0.05, rng), std::invalid_argument);
}

TEST(Permutation, MeStatisticPlugsIn) {
    Rng rng(12);
    MeStatistic s(5, 0.0, 3);
    const auto r = permutation_test(s, gaussian(40, 2, 2, rng), gaussian(40, 2, 0, rng), 99, 0.05, rng);
    EXPECT_EQ(r.metric, "me");
    EXPECT_TRUE(r.reject);
}

TEST(Power, NullPowerNearAlphaAndShiftDetected) {
    const Sampler p = [](std::size_t n, Rng& r) { return gaussian(n, 2, 0, r); };
    const Sampler q = [](std::size_t n, Rng& r) { return gaussian(n, 2, 2, r); };
    const StatisticFactory mmd = [] { return std::make_unique<MmdStatistic>(); };
    const auto null = power_estimate(mmd, p, p, 20, 0.05, 100, 99, 1);
    // Binomial 95% band for 100 trials at 0.05 is about [0.007, 0.093].
    EXPECT_LE(null.rejection_rate, 0.11);
    EXPECT_EQ(null.trials, 100u);
    const auto alt = power_estimate(mmd, p, q, 20, 0.05, 20, 99, 1);
    EXPECT_GT(alt.rejection_rate, 0.9);
    EXPECT_THROW(power_estimate(mmd, p, q, 20, 0.05, 0, 99, 1), std::invalid_argument);
}

TEST(Power, IndependentOfThreadCount) {
    const Sampler p = [](std::size_t n, Rng& r) { return gaussian(n, 2, 0, r); };
    const Sampler q = [](std::size_t n, Rng& r) { return gaussian(n, 2, 0.5, r); };
    const StatisticFactory mmd = [] { return std::make_unique<MmdStatistic>(); };
    const auto a = power_estimate(mmd, p, q, 15, 0.05, 30, 99, 4);
    const auto saved = max_threads();
    set_max_threads(1);
    const auto b = power_estimate(mmd, p, q, 15, 0.05, 30, 99, 4);
    set_max_threads(saved);
    EXPECT_EQ(a.rejection_rate, b.rejection_rate);
}

TEST(Histogram, IdenticalDisjointAndOracle) {
    const std::vector<double> a{1, 2, 3, 4}, b{10, 11, 12};
    EXPECT_EQ(marginal_histogram(a, a, 5).tv_distance, 0.0);
    EXPECT_DOUBLE_EQ(marginal_histogram(a, b, 4).tv_distance, 1.0);
    Rng rng(13);
    std::vector<double> u, v;
    for (int i = 0; i < 300; ++i) u.push_back(rng.normal());
    for (int i = 0; i < 200; ++i) v.push_back(rng.normal(0.4, 1.2));
    const auto h = marginal_histogram(u, v, 12);
    ASSERT_EQ(h.edges.size(), 13u);
    double tv = 0, su = 0, sv = 0;
    for (std::size_t i = 0; i < 12; ++i) {
        double cu = 0, cv = 0;
        const bool last = i == 11;
        for (double x : u) cu += x >= h.edges[i] && (x < h.edges[i + 1] || (last && x <= h.edges[i + 1]));
        for (double x : v) cv += x >= h.edges[i] && (x < h.edges[i + 1] || (last && x <= h.edges[i + 1]));
        EXPECT_NEAR(h.freq_a[i], cu / 300, 1e-12);
        EXPECT_NEAR(h.freq_b[i], cv / 200, 1e-12);
        su += h.freq_a[i];
        sv += h.freq_b[i];
        tv += 0.5 * std::abs(cu / 300 - cv / 200);
    }
    EXPECT_NEAR(h.tv_distance, tv, 1e-12);
    EXPECT_NEAR(su, 1.0, 1e-12);
    EXPECT_NEAR(sv, 1.0, 1e-12);
    EXPECT_THROW(marginal_histogram({}, a, 4), std::invalid_argument);
}

TEST(Histogram, CsvColumns) {
    std::ostringstream os;
    write_histogram_csv(os, marginal_histogram({0, 1}, {1, 1}, 2));
    EXPECT_EQ(os.str(), "bin_left,bin_right,freq_a,freq_b\n0,0.5,0.5,0\n0.5,1,0.5,1\n");
}

TEST(Extractors, ShapesAndSpatialMeans) {
    ClimateArchive a(2, 3, 9);
    for (std::size_t i = 0; i < a.values.size(); ++i) a.values[i] = static_cast<float>(i % 11);
    const auto full = month_features(a, 4, Extractor::parse("full"));
    EXPECT_EQ(full.size(), 2u);
    EXPECT_EQ(full.dim(), 4u * 7 * 6);
    const auto tas = month_features(a, 4, Extractor::parse("var:tas"));
    EXPECT_EQ(tas.dim(), 24u);
    EXPECT_EQ(tas.x(1, 6), a.day_var(5, kTas)[0]);
    const auto sm = month_features(a, 4, Extractor::parse("spatial_mean"));
    ASSERT_EQ(sm.dim(), 28u);
    double ref = 0;
    for (std::size_t i = 0; i < 6; ++i) ref += a.day_var(6, kPr)[i];
    EXPECT_NEAR(sm.x(1, 2 * 7 + kPr), ref / 6, 1e-12);
    EXPECT_EQ(Extractor::parse("var:hur").name(), "var:hur");
    EXPECT_THROW(Extractor::parse("var:zz"), std::invalid_argument);
    EXPECT_THROW(Extractor::parse("mean"), std::invalid_argument);
    EXPECT_THROW(month_features(a, 10, Extractor::parse("full")), std::invalid_argument);
}

TEST(Reports, JsonFields) {
    TestReport r;
    r.metric = "mmd";
    r.permutations = 99;
    r.trials = 3;
    const json j = r;
    for (const char* k : {"metric", "statistic", "p_value", "alpha", "reject", "seed", "null_quantiles", "trials", "rejection_rate"})
        EXPECT_TRUE(j.contains(k)) << k;
}
