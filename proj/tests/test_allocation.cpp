#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <riskshare/allocation.hpp>
#include <riskshare/errors.hpp>
#include <riskshare/oracles.hpp>
#include <riskshare/scenario.hpp>

#include "test_support.hpp"

using namespace riskshare;
namespace rt = riskshare::testing;

namespace {

ScenarioSet three_atom_joint() {
    return ScenarioSet::from_atoms({{1.0, 3.0, 0.5}, {2.5, 0.5, 1.0}, {4.0, 2.0, 3.0}}, {0.3, 0.5, 0.2});
}

ScenarioSet gamma_pair(CopulaSpec copula, std::size_t n, std::uint64_t seed) {
    return sample_joint(CopulaModel{{GammaMarginal{5.0, 1.0}, GammaMarginal{0.3, 8.0}}, std::move(copula)}, n, seed);
}

double sum_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0);
}

// Stieltjes weights D(Sbar(s-)) - D(Sbar(s)) over distinct sorted atoms, computed from scratch
std::vector<double> atom_increments(const DistortionFamily& fam, double theta, const std::vector<double>& probs_sorted) {
    std::vector<double> inc(probs_sorted.size());
    double above = 1.0;
    for (std::size_t k = 0; k < probs_sorted.size(); ++k) {
        const double after = std::max(above - probs_sorted[k], 0.0);
        inc[k] = distortion_eval(fam, theta, above) - distortion_eval(fam, theta, k + 1 == inc.size() ? 0.0 : after);
        above = after;
    }
    return inc;
}

AggregateCapital wang_aggregate(const ScenarioSet& scen) {
    return distortion_aggregate(DistortionFamily::wang(), scen);
}

} // namespace

TEST_CASE("squared-penalty allocation hand example") {
    // E[X] = (1, 2) under the physical measure
    const ScenarioSet scen = ScenarioSet::from_atoms({{0.0, 1.0}, {2.0, 3.0}}, {0.5, 0.5});
    OptSquared fam;
    fam.betas = {0.3, 0.7};
    const auto k = opt_squared_allocate(fam, 0.5, 5.0, scen);
    CHECK(k[0] == doctest::Approx(1.6).epsilon(1e-14));
    CHECK(k[1] == doctest::Approx(3.4).epsilon(1e-14));
    const auto at_mean = opt_squared_allocate(fam, 0.5, 3.0, scen);
    CHECK(at_mean[0] == doctest::Approx(1.0));
    CHECK(at_mean[1] == doctest::Approx(2.0));
    fam.betas = {0.3, 0.6};
    CHECK_THROWS_AS(opt_squared_allocate(fam, 0.5, 5.0, scen), ConfigError);
}

TEST_CASE("theta-dependent betas interpolate between rows") {
    OptSquared fam;
    fam.beta_table = BetaTable{{0.0, 1.0}, {{0.2, 0.8}, {0.6, 0.4}}};
    const auto b = betas_at(fam, 0.25, 2);
    CHECK(b[0] == doctest::Approx(0.3));
    CHECK(b[0] + b[1] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(betas_at(fam, -3.0, 2)[0] == doctest::Approx(0.2));
    CHECK(betas_at(fam, 7.0, 2)[0] == doctest::Approx(0.6));
}

TEST_CASE("tail preference means") {
    const ScenarioSet scen = sample_joint(CopulaModel{{NormalMarginal{0.0, 1.0}}, IndependentCopula{}}, 100000, 5);
    const auto x = scen.column(0);
    CHECK(tail_preference_mean(scen, 0, 0.0) == doctest::Approx(rt::mean_of(x)).epsilon(1e-12));
    CHECK(tail_preference_mean(scen, 0, 1.0) == *std::max_element(x.begin(), x.end()));
    CHECK_THROWS_AS(tail_preference_mean(scen, 0, 1.5), DomainError);

    const double q = rt::std_normal_quantile_oracle(0.975);
    const double oracle = rt::simpson([](double t) { return t * rt::std_normal_pdf(t); }, q, 40.0, 200000) / 0.025;
    CHECK(oracle == doctest::Approx(2.3378).epsilon(1e-4));
    std::vector<double> reps;
    for (std::uint64_t seed = 50; seed < 60; ++seed) {
        const ScenarioSet r = sample_joint(CopulaModel{{NormalMarginal{0.0, 1.0}}, IndependentCopula{}}, 10000, seed);
        reps.push_back(tail_preference_mean(r, 0, 0.975));
    }
    const double se = rt::sd_of(reps) / std::sqrt(10.0);
    CHECK(std::abs(tail_preference_mean(scen, 0, 0.975) - oracle) <= 3.0 * se);
}

TEST_CASE("absolute-penalty allocation") {
    const std::vector<QuantileSource> uniforms = {MarginalSpec{UniformMarginal{0.0, 1.0}},
                                                  MarginalSpec{UniformMarginal{0.0, 1.0}}};
    const auto k = opt_absolute_allocate(1.2, uniforms);
    CHECK(k[0] == doctest::Approx(0.6).epsilon(1e-10));
    CHECK(k[1] == doctest::Approx(0.6).epsilon(1e-10));

    const std::vector<QuantileSource> gammas = {MarginalSpec{GammaMarginal{5.0, 1.0}},
                                                MarginalSpec{GammaMarginal{0.3, 8.0}}};
    const double s = rt::gamma_quantile_oracle(5.0, 1.0, 0.5) + rt::gamma_quantile_oracle(0.3, 8.0, 0.5);
    const auto g = opt_absolute_allocate(s, gammas);
    const double u = rt::bisect(
        [&](double v) { return rt::gamma_quantile_oracle(5.0, 1.0, v) + rt::gamma_quantile_oracle(0.3, 8.0, v) - s; },
        0.01, 0.99, 80);
    CHECK(u == doctest::Approx(0.5).epsilon(1e-8));
    CHECK(std::abs(g[0] - rt::gamma_quantile_oracle(5.0, 1.0, u)) <= 1e-7);
    CHECK(std::abs(g[1] - rt::gamma_quantile_oracle(0.3, 8.0, u)) <= 1e-7);
    CHECK(std::abs(g[0] + g[1] - s) <= 1e-9);

    OptAbsolute tail;
    tail.prefs = {TailPreference{0.9}, PhysicalPreference{}};
    CHECK_THROWS_AS(validate(AllocationFamily{tail}, 2), ConfigError);
}

TEST_CASE("absolute-penalty allocation adds up across a sample") {
    const ScenarioSet scen = gamma_pair(ClaytonCopula{2.0}, 3000, 8);
    const auto marg = preference_marginals(OptAbsolute{}, scen);
    for (std::size_t k = 0; k < scen.size(); k += 37) {
        const double s = scen.aggregate()[k];
        const auto a = opt_absolute_allocate(s, marg);
        REQUIRE(std::abs(a[0] + a[1] - s) <= 1e-9 * (1.0 + s));
    }
}

TEST_CASE("Euler rule with one unit reproduces the aggregate risk measure") {
    const ScenarioSet scen = sample_joint(CopulaModel{{GammaMarginal{2.0, 1.5}}, IndependentCopula{}}, 2000, 3);
    const auto model = riskshare::bind(EulerDistortion{DistortionFamily::wang()}, scen);
    const auto dist = aggregate_distribution(scen);
    for (double theta : {0.1, 0.5, 0.9, 0.99}) {
        const Allocation a = model->allocate_theta(theta);
        const double rho = distortion_risk_measure(DistortionFamily::wang(), theta, dist);
        CHECK(a.k[0] == doctest::Approx(rho).epsilon(1e-10));
        CHECK(a.aggregate == doctest::Approx(rho).epsilon(1e-12));
    }
}

TEST_CASE("Euler rule on a three-atom joint matches enumeration") {
    const ScenarioSet scen = three_atom_joint();
    const auto model = riskshare::bind(EulerDistortion{DistortionFamily::wang()}, scen);
    const std::vector<std::vector<double>> rows = {{2.5, 0.5, 1.0}, {1.0, 3.0, 0.5}, {4.0, 2.0, 3.0}};
    const std::vector<double> probs = {0.5, 0.3, 0.2};
    // S sorted ascending: 4.0 (p .5), 4.5 (p .3), 9.0 (p .2)
    for (double theta : {0.2, 0.6, 0.95}) {
        const auto inc = atom_increments(DistortionFamily::wang(), theta, probs);
        const Allocation a = model->allocate_theta(theta);
        for (std::size_t i = 0; i < 3; ++i) {
            double want = 0.0;
            for (std::size_t k = 0; k < 3; ++k) {
                want += rows[k][i] * inc[k];
            }
            CAPTURE(theta);
            CAPTURE(i);
            CHECK(a.k[i] == doctest::Approx(want).epsilon(1e-12));
        }
        CHECK(sum_of(a.k) == doctest::Approx(a.aggregate).epsilon(1e-12));
    }
}

TEST_CASE("Euler allocations of comonotonic units are non-decreasing in theta") {
    const ScenarioSet scen = gamma_pair(ComonotonicCopula{}, 20000, 4);
    const auto model = riskshare::bind(EulerDistortion{DistortionFamily::wang()}, scen);
    std::vector<double> prev(2, -INFINITY);
    std::vector<double> k(2);
    bool monotone = true;
    for (int j = 0; j <= 200; ++j) {
        const double c = model->parametrization().coord_at(j / 200.0);
        model->allocate(c, k);
        for (std::size_t i = 0; i < 2; ++i) {
            monotone = monotone && k[i] >= prev[i] - 1e-10;
            prev[i] = k[i];
        }
    }
    CHECK(monotone);
}

TEST_CASE("size-biased allocation on two equiprobable atoms") {
    const ScenarioSet scen = ScenarioSet::from_atoms({{1.0, 1.0}, {2.0, 2.0}}, {0.5, 0.5});
    const WeightedRisk fam{WeightKind::size_biased, std::nullopt};
    CHECK(weighted_allocate(fam, 0.0, scen).k[0] == doctest::Approx(1.5).epsilon(1e-14));
    for (double theta : {-2.0, -0.5, 0.7, 1.0, 3.0}) {
        const double want = (std::pow(2.0, theta) + 2.0 * std::pow(4.0, theta)) / (std::pow(2.0, theta) + std::pow(4.0, theta));
        const Allocation a = weighted_allocate(fam, theta, scen);
        CHECK(a.k[0] == doctest::Approx(want).epsilon(1e-13));
        CHECK(a.aggregate == doctest::Approx(2.0 * want).epsilon(1e-13));
    }
    const WeightedRisk ess{WeightKind::esscher, std::nullopt};
    CHECK(weighted_allocate(ess, 0.0, scen).k[1] == doctest::Approx(1.5).epsilon(1e-14));
    const double t = 0.4;
    const double want = (std::exp(2.0 * t) + 2.0 * std::exp(4.0 * t)) / (std::exp(2.0 * t) + std::exp(4.0 * t));
    CHECK(weighted_allocate(ess, t, scen).k[0] == doctest::Approx(want).epsilon(1e-13));
    // overflow guard: the max shift keeps extreme parameters finite
    CHECK(weighted_allocate(ess, 2000.0, scen).k[0] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("weighted aggregate capital is monotone and reaches the sample extremes") {
    const ScenarioSet scen = gamma_pair(ClaytonCopula{2.0}, 5000, 6);
    const auto dist = aggregate_distribution(scen);
    for (auto kind : {WeightKind::size_biased, WeightKind::esscher}) {
        const auto model = riskshare::bind(WeightedRisk{kind, std::nullopt}, scen);
        double prev = -INFINITY;
        bool monotone = true;
        for (int j = 0; j <= 400; ++j) {
            const double k = model->aggregate(model->parametrization().coord_at(j / 400.0));
            monotone = monotone && k >= prev - 1e-12 * (1.0 + std::abs(k));
            prev = k;
        }
        CHECK(monotone);
        const auto& par = model->parametrization();
        CHECK(model->aggregate(par.coord_lo()) == doctest::Approx(dist.min()).epsilon(1e-14));
        CHECK(model->aggregate(par.coord_hi()) == doctest::Approx(dist.max()).epsilon(1e-14));
        const double range = dist.max() - dist.min();
        CHECK(model->aggregate(par.coord_at(1e-4)) - dist.min() <= 1e-2 * range);
        CHECK(dist.max() - model->aggregate(par.coord_at(1.0 - 1e-4)) <= 1e-2 * range);
    }
}

TEST_CASE("likelihood-ratio check of the weight families") {
    CHECK(weighted_mlr_check(WeightedRisk{WeightKind::size_biased, std::nullopt}).pass);
    CHECK(weighted_mlr_check(WeightedRisk{WeightKind::esscher, std::nullopt}).pass);
    CHECK(weighted_mlr_check(WeightedRisk{WeightKind::esscher, std::nullopt}).checked > 1000);
    // w(1, 0) / w(0, 0) = 2 exceeds w(1, 1) / w(0, 1) = 1
    WeightedRisk bad{WeightKind::custom, CustomWeightTable{{0.0, 1.0}, {0.0, 1.0}, {1.0, 1.0, 2.0, 1.0}}};
    const MlrReport rep = weighted_mlr_check(bad);
    CHECK_FALSE(rep.pass);
    CHECK(rep.violations == 1);
    CHECK(rep.worst == doctest::Approx(-std::log(2.0)));
    WeightedRisk good{WeightKind::custom, CustomWeightTable{{0.0, 1.0}, {0.0, 1.0}, {1.0, 1.0, 1.0, 2.0}}};
    CHECK(weighted_mlr_check(good).pass);
}

TEST_CASE("holistic weights and allocation") {
    Holistic h{1.0, {1.0, 1.0}, DistortionFamily::wang(), {}};
    const HolisticWeights w = holistic_weights(h, 2);
    CHECK(w.beta == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(w.betas[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(std::abs(w.beta + w.betas[0] + w.betas[1] - 1.0) <= 1e-14);

    Holistic h3 = h;
    h3.gamma = 0.7;
    h3.gammas = {2.0, 0.4, 5.0};
    const ScenarioSet scen = three_atom_joint();
    const HolisticWeights w3 = holistic_weights(h3, 3);
    CHECK(std::abs(w3.beta + sum_of(w3.betas) - 1.0) <= 1e-14);
    const auto fam = DistortionFamily::wang();
    for (double theta : {0.3, 0.5, 0.8}) {
        const Allocation a = holistic_allocate(h3, theta, scen);
        const double rho_s = distortion_risk_measure(fam, theta, aggregate_distribution(scen));
        std::vector<double> rho(3);
        for (std::size_t i = 0; i < 3; ++i) {
            rho[i] = distortion_risk_measure(fam, theta, unit_distribution(scen, i));
        }
        const double gap = sum_of(rho) - rho_s;
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(a.k[i] == doctest::Approx(rho[i] - w3.betas[i] * gap).epsilon(1e-12));
        }
        CHECK(a.aggregate == doctest::Approx(rho_s + w3.beta * gap).epsilon(1e-12));
        CHECK(std::abs(sum_of(a.k) - a.aggregate) <= 1e-12 * (1.0 + std::abs(a.aggregate)));
    }
    h3.gammas = {1.0, -1.0, 1.0};
    CHECK_THROWS_AS(holistic_weights(h3, 3), ConfigError);
}

TEST_CASE("holistic gap vanishes for comonotonic units with a shared distortion") {
    const ScenarioSet scen = gamma_pair(ComonotonicCopula{}, 4000, 2);
    const Holistic h{1.0, {1.0, 2.0}, DistortionFamily::wang(), {}};
    const Allocation a = holistic_allocate(h, 0.8, scen);
    const double r1 = distortion_risk_measure(DistortionFamily::wang(), 0.8, unit_distribution(scen, 0));
    const double r2 = distortion_risk_measure(DistortionFamily::wang(), 0.8, unit_distribution(scen, 1));
    CHECK(a.k[0] == doctest::Approx(r1).epsilon(1e-9));
    CHECK(a.k[1] == doctest::Approx(r2).epsilon(1e-9));
    CHECK(a.aggregate == doctest::Approx(r1 + r2).epsilon(1e-9));
}

TEST_CASE("quadratic objectives agree with the closed-form allocations") {
    const ScenarioSet scen = three_atom_joint();
    OptSquared sq;
    sq.betas = {0.2, 0.5, 0.3};
    const QuadraticWeights qw = quadratic_weights(sq, 0.5, scen);
    REQUIRE(qw.unit.size() == 3);
    CHECK(qw.aggregate.empty());
    QuadraticProblem prob;
    prob.unit_weights = qw.unit;
    for (std::size_t i = 0; i < 3; ++i) {
        prob.unit_values.push_back(scen.column(i));
    }
    prob.sum_constraint = 7.25;
    const QuadraticSolution sol = brute_force_constrained_quadratic(prob);
    const auto k = opt_squared_allocate(sq, 0.5, 7.25, scen);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(sol.k[i] == doctest::Approx(k[i]).epsilon(1e-10));
    }

    const Holistic h{1.5, {1.0, 0.5, 2.0}, DistortionFamily::power(), {}};
    const QuadraticWeights hw = quadratic_weights(h, 0.7, scen);
    QuadraticProblem hp;
    hp.unit_weights = hw.unit;
    hp.unit_values = prob.unit_values;
    hp.aggregate_weights = hw.aggregate;
    hp.aggregate_values.assign(scen.aggregate().begin(), scen.aggregate().end());
    const QuadraticSolution hs = brute_force_constrained_quadratic(hp);
    const Allocation ha = holistic_allocate(h, 0.7, scen);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(hs.k[i] == doctest::Approx(ha.k[i]).epsilon(1e-10));
    }
    CHECK_THROWS_AS(quadratic_weights(EulerDistortion{DistortionFamily::wang()}, 0.5, scen), ConfigError);
}

TEST_CASE("top-down rules add up to the exogenous aggregate capital") {
    const ScenarioSet scen = gamma_pair(ClaytonCopula{2.0}, 2000, 10);
    OptSquared sq;
    sq.betas = {0.4, 0.6};
    OptSquared tail_sq;
    tail_sq.betas = {0.5, 0.5};
    tail_sq.prefs = {TailPreference{}, PhysicalPreference{}};
    const std::vector<AllocationFamily> rules = {sq, tail_sq, OptAbsolute{}};
    for (const auto& rule : rules) {
        CAPTURE(family_name(rule));
        const auto model = riskshare::bind(rule, scen, wang_aggregate(scen));
        std::vector<double> k(2);
        for (int j = 1; j < 100; ++j) {
            const double c = model->parametrization().coord_at(j / 100.0);
            model->allocate(c, k);
            const double agg = model->aggregate(c);
            REQUIRE(std::abs(k[0] + k[1] - agg) <= 1e-9 * (1.0 + std::abs(agg)));
        }
    }
    const auto euler = riskshare::bind(EulerDistortion{DistortionFamily::power()}, scen);
    std::vector<double> k(2);
    for (int j = 1; j < 100; ++j) {
        const double c = euler->parametrization().coord_at(j / 100.0);
        euler->allocate(c, k);
        const double rho = distortion_risk_measure_coord(DistortionFamily::power(), c, aggregate_distribution(scen));
        REQUIRE(std::abs(k[0] + k[1] - rho) <= 1e-9 * (1.0 + std::abs(rho)));
    }
    CHECK_THROWS_AS(riskshare::bind(sq, scen), ConfigError);
    CHECK_THROWS_AS(riskshare::bind(EulerDistortion{DistortionFamily::wang()}, scen, wang_aggregate(scen)), ConfigError);
}

TEST_CASE("size-biased weights refuse negative losses") {
    const ScenarioSet scen = sample_joint(CopulaModel{{NormalMarginal{0.0, 1.0}}, IndependentCopula{}}, 100, 1);
    CHECK_THROWS_AS(riskshare::bind(WeightedRisk{WeightKind::size_biased, std::nullopt}, scen), DomainError);
}
