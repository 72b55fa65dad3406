#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include <riskshare/errors.hpp>
#include <riskshare/estimators.hpp>

#include "test_support.hpp"

using namespace riskshare;
namespace rt = riskshare::testing;

TEST_CASE("empirical quantile examples") {
    const EmpiricalDistribution three({3.0, 1.0, 2.0});
    CHECK(empirical_quantile(three, 0.5, QuantileSide::left) == 2.0);

    const EmpiricalDistribution two({0.0, 1.0}, {0.2, 0.8});
    CHECK(empirical_quantile(two, 0.2, QuantileSide::left) == 0.0);
    CHECK(empirical_quantile(two, 0.2, QuantileSide::right) == 1.0);
    CHECK(empirical_quantile(two, 0.0, QuantileSide::right) == 0.0);
    CHECK(empirical_quantile(two, 1.0, QuantileSide::left) == 1.0);

    const EmpiricalDistribution point({4.5});
    for (double p : {0.01, 0.3, 0.99}) {
        CHECK(empirical_quantile(point, p, QuantileSide::left) == 4.5);
        CHECK(empirical_quantile(point, p, QuantileSide::right) == 4.5);
    }
    CHECK_THROWS_AS(empirical_quantile(EmpiricalDistribution{}, 0.5, QuantileSide::left), std::invalid_argument);
    CHECK_THROWS_AS(empirical_quantile(three, 1.2, QuantileSide::left), std::invalid_argument);
}

TEST_CASE("left quantile never exceeds the right quantile") {
    std::mt19937_64 gen(17);
    std::uniform_int_distribution<int> atom(0, 9);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> v(50);
        std::vector<double> w(50);
        for (std::size_t k = 0; k < v.size(); ++k) {
            v[k] = atom(gen);
            w[k] = 0.1 + unif(gen);
        }
        const EmpiricalDistribution d(v, w);
        for (int j = 0; j <= 200; ++j) {
            const double p = j / 200.0;
            const double l = empirical_quantile(d, p, QuantileSide::left);
            const double r = empirical_quantile(d, p, QuantileSide::right);
            REQUIRE(l <= r);
            // definitions: F(l) >= p and F(r-) <= p
            REQUIRE(d.cdf(l) >= p - 1e-12);
        }
    }
}

TEST_CASE("tail means and moments") {
    const EmpiricalDistribution d({1.0, 2.0, 3.0, 4.0});
    CHECK(d.tail_mean(0.0) == doctest::Approx(2.5));
    CHECK(d.tail_mean(0.5) == doctest::Approx(3.5));
    CHECK(d.tail_mean(1.0) == 4.0);
    CHECK(d.tail_mean(0.9) == doctest::Approx(4.0));
    CHECK(d.mean() == doctest::Approx(2.5));
    CHECK(d.variance() == doctest::Approx(1.25));
}

TEST_CASE("conditional mean of an exchangeable normal pair at s = 0") {
    MultivariateNormal mvn{Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity()};
    const ScenarioSet scen = sample_joint(mvn, 200000, 21);
    const BinnedConditionalMean cm = conditional_mean_given_sum(scen, 200);
    const std::size_t b = cm.locate(0.0);
    const double se = std::sqrt(0.5 / static_cast<double>(cm.count(b)));
    CHECK(std::abs(cm.evaluate(0.0, 0)) <= 3.0 * se);
    CHECK(std::abs(cm.mean(b, 0) - 0.5 * cm.s_mean(b)) <= 3.0 * se);
}

TEST_CASE("binned conditional means of a multivariate normal match the linear regression") {
    MultivariateNormal mvn;
    mvn.mu = Eigen::Vector3d(1.0, 2.0, -1.0);
    mvn.sigma.resize(3, 3);
    mvn.sigma << 2.0, 0.5, 0.3, 0.5, 1.0, -0.2, 0.3, -0.2, 1.5;
    const ScenarioSet scen = sample_joint(mvn, 100000, 4);
    const BinnedConditionalMean cm = conditional_mean_given_sum(scen, 20);
    const double var_s = mvn.sigma.sum();
    const double mu_s = mvn.mu.sum();
    for (std::size_t b = 0; b < cm.bins(); ++b) {
        for (std::size_t i = 0; i < 3; ++i) {
            const double cov = mvn.sigma.row(static_cast<Eigen::Index>(i)).sum();
            const double want = mvn.mu(static_cast<Eigen::Index>(i)) + cov / var_s * (cm.s_mean(b) - mu_s);
            const double cond_var = mvn.sigma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) - cov * cov / var_s;
            const double se = std::sqrt(cond_var / static_cast<double>(cm.count(b)));
            CAPTURE(b);
            CAPTURE(i);
            CHECK(std::abs(cm.mean(b, i) - want) <= 3.0 * se);
        }
    }
}

TEST_CASE("binned means are sum-consistent and partition the range") {
    MultivariateNormal mvn{Eigen::Vector3d(0.0, 1.0, 2.0), Eigen::Matrix3d::Identity()};
    const ScenarioSet scen = sample_joint(mvn, 30000, 8);
    const BinnedConditionalMean cm = conditional_mean_given_sum(scen, 100);
    const EmpiricalDistribution s = aggregate_distribution(scen);
    CHECK(cm.bin_lo(0) == s.min());
    CHECK(cm.bin_hi(cm.bins() - 1) == s.max());
    std::size_t total = 0;
    for (std::size_t b = 0; b < cm.bins(); ++b) {
        double sum = 0.0;
        double slope = 0.0;
        for (std::size_t i = 0; i < 3; ++i) {
            sum += cm.mean(b, i);
            slope += cm.slope(b, i);
        }
        CHECK(std::abs(sum - cm.s_mean(b)) <= 1e-10 * (1.0 + std::abs(cm.s_mean(b))));
        CHECK(slope == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(cm.count(b) >= 10);
        if (b + 1 < cm.bins()) {
            CHECK(cm.bin_hi(b) == cm.bin_lo(b + 1));
        }
        total += cm.count(b);
    }
    CHECK(total == scen.size());
    // constant extrapolation beyond the sample range
    CHECK(cm.evaluate(s.max() + 100.0, 1) == cm.evaluate(s.max(), 1));
    CHECK(cm.evaluate(s.min() - 100.0, 0) == cm.evaluate(s.min(), 0));
    std::vector<double> out(3);
    cm.evaluate(s.min() + 1.3, out);
    CHECK(out[0] + out[1] + out[2] == doctest::Approx(s.min() + 1.3).epsilon(1e-12));

    std::ostringstream os;
    cm.write_csv(os);
    CHECK(os.str().rfind("bin_lo,bin_hi,s_mean,x1_mean,x2_mean,x3_mean,count\n", 0) == 0);
    CHECK_THROWS_AS(conditional_mean_given_sum(scen, 5000), std::invalid_argument);
    CHECK_THROWS_AS(conditional_mean_given_sum(scen, 1), std::invalid_argument);
}

TEST_CASE("discrete joint conditional means are exact") {
    const std::vector<std::vector<double>> atoms{{1.0, 2.0}, {2.0, 1.0}, {0.0, 1.0}, {4.0, 0.5}};
    const std::vector<double> probs{0.3, 0.1, 0.4, 0.2};
    const ScenarioSet scen = ScenarioSet::from_atoms(atoms, probs);
    // direct enumeration
    std::map<double, std::pair<double, std::vector<double>>> direct;
    for (std::size_t k = 0; k < atoms.size(); ++k) {
        const double s = atoms[k][0] + atoms[k][1];
        auto& e = direct[s];
        e.second.resize(2, 0.0);
        e.first += probs[k];
        e.second[0] += probs[k] * atoms[k][0];
        e.second[1] += probs[k] * atoms[k][1];
    }
    for (const auto& cm : {conditional_mean_by_value(scen), conditional_mean_given_sum(scen, 3, 1)}) {
        REQUIRE(cm.bins() == direct.size());
        for (const auto& [s, e] : direct) {
            for (std::size_t i = 0; i < 2; ++i) {
                CHECK(cm.evaluate(s, i) == doctest::Approx(e.second[i] / e.first).epsilon(1e-14));
            }
        }
    }
}

TEST_CASE("comonotonic sum quantiles") {
    const std::vector<MarginalSpec> uu{UniformMarginal{0.0, 1.0}, UniformMarginal{0.0, 1.0}};
    CHECK(comonotonic_sum_quantile(uu, 0.25) == doctest::Approx(0.5));
    const std::vector<MarginalSpec> one{GammaMarginal{5.0, 1.0}};
    CHECK(comonotonic_sum_quantile(one, 0.4) == marginal_quantile(GammaMarginal{5.0, 1.0}, 0.4));
    const std::vector<MarginalSpec> gg{GammaMarginal{5.0, 1.0}, GammaMarginal{0.3, 8.0}};
    const double want = rt::gamma_quantile_oracle(5.0, 1.0, 0.9) + rt::gamma_quantile_oracle(0.3, 8.0, 0.9);
    CHECK(comonotonic_sum_quantile(gg, 0.9) == doctest::Approx(want).epsilon(1e-10));
    double prev = -1.0;
    for (int j = 0; j <= 1000; ++j) {
        const double q = comonotonic_sum_quantile(gg, j / 1000.0);
        REQUIRE(q >= prev);
        prev = q;
    }
    const std::vector<EmpiricalDistribution> emp{EmpiricalDistribution({1.0, 2.0, 3.0}), EmpiricalDistribution({10.0, 20.0})};
    CHECK(comonotonic_sum_quantile(emp, 0.5) == doctest::Approx(12.0));
    CHECK_THROWS_AS(comonotonic_sum_quantile(uu, 1.1), std::invalid_argument);
}

TEST_CASE("alpha-mixed inverse root") {
    SUBCASE("continuous sum: alpha is one and the quantile hits s") {
        const std::vector<MarginalSpec> gg{GammaMarginal{5.0, 1.0}, GammaMarginal{0.3, 8.0}};
        auto q = [&](double u) { return comonotonic_sum_quantile(gg, u); };
        const AlphaMixedRoot r = alpha_mixed_inverse_root(q, 7.0);
        CHECK(r.alpha == 1.0);
        CHECK(std::abs(q(r.u) - 7.0) <= 1e-9);
    }
    SUBCASE("two uniforms at s = 1") {
        const std::vector<MarginalSpec> uu{UniformMarginal{0.0, 1.0}, UniformMarginal{0.0, 1.0}};
        auto q = [&](double u) { return comonotonic_sum_quantile(uu, u); };
        const AlphaMixedRoot r = alpha_mixed_inverse_root(q, 1.0);
        CHECK(r.u == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(r.alpha == 1.0);
    }
    SUBCASE("jump of a discrete comonotonic sum") {
        // two copies of a fair {0,1} coin: the comonotonic sum jumps from 0 to 2 at u = 1/2
        const std::vector<MarginalSpec> coins{DiscreteMarginal{{0.0, 1.0}, {0.5, 0.5}},
                                              DiscreteMarginal{{0.0, 1.0}, {0.5, 0.5}}};
        auto q = [&](double u) { return comonotonic_sum_quantile(coins, u); };
        const double s = 0.5;
        const AlphaMixedRoot r = alpha_mixed_inverse_root(q, s);
        CHECK(r.u == doctest::Approx(0.5).epsilon(1e-12));
        // hand solution of alpha * 0 + (1 - alpha) * 2 = 0.5
        CHECK(r.alpha == doctest::Approx(0.75).epsilon(1e-12));
        CHECK(std::abs(r.alpha * r.left_value + (1.0 - r.alpha) * r.right_value - s) <= 1e-9);
    }
    SUBCASE("defining equation holds across a discrete range") {
        const std::vector<QuantileSource> parts{EmpiricalDistribution({0.0, 1.0, 5.0}, {0.2, 0.5, 0.3}),
                                                EmpiricalDistribution({2.0, 3.0}, {0.6, 0.4})};
        auto q = [&](double u) { return comonotonic_sum_quantile(parts, u); };
        for (double s = 2.0; s <= 8.0; s += 0.173) {
            const AlphaMixedRoot r = alpha_mixed_inverse_root(q, s);
            CAPTURE(s);
            CHECK(std::abs(r.alpha * r.left_value + (1.0 - r.alpha) * r.right_value - s) <= 1e-9);
        }
        CHECK_THROWS_AS(alpha_mixed_inverse_root(q, 9.0), DomainError);
        CHECK_THROWS_AS(alpha_mixed_inverse_root(q, 1.0), DomainError);
    }
}
