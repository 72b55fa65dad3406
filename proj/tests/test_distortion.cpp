#include <doctest.h>

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <riskshare/distortion.hpp>
#include <riskshare/errors.hpp>
#include <riskshare/scenario.hpp>

#include "test_support.hpp"

using namespace riskshare;
namespace rt = riskshare::testing;

namespace {

std::vector<double> normal_sample(std::size_t n, double mu, double sigma, std::uint64_t seed) {
    const ScenarioSet scen = sample_joint(CopulaModel{{NormalMarginal{mu, sigma}}, IndependentCopula{}}, n, seed);
    return scen.column(0);
}

// D_alpha(p) = min(p / (1 - alpha), 1), the building block of the dual family
double tvar_block(double alpha, double p) {
    return std::min(p / (1.0 - alpha), 1.0);
}

} // namespace

TEST_CASE("Wang and power reduce to the identity at theta one half") {
    for (double p : {0.0, 1e-6, 0.1, 0.37, 0.5, 0.9, 1.0}) {
        CAPTURE(p);
        CHECK(distortion_eval(DistortionFamily::wang(), 0.5, p) == doctest::Approx(p).epsilon(1e-14));
        CHECK(distortion_eval(DistortionFamily::power(), 0.5, p) == doctest::Approx(p).epsilon(1e-14));
    }
}

TEST_CASE("distortion formulas on a grid") {
    const auto wang = DistortionFamily::wang();
    const auto power = DistortionFamily::power();
    const auto dual = DistortionFamily::tvar_dual();
    const auto var = DistortionFamily::var_indicator();
    CHECK(std::abs(distortion_eval(wang, 0.975, 0.5) - rt::std_normal_cdf(-rt::std_normal_quantile_oracle(0.025))) <=
          1e-12);
    CHECK(distortion_eval(wang, 0.975, 0.5) == doctest::Approx(0.975).epsilon(1e-10));
    for (double theta : {0.02, 0.2, 0.45, 0.5, 0.61, 0.9, 0.999}) {
        for (double p : {0.001, 0.05, 0.3, 0.5, 0.77, 0.95, 0.9999}) {
            CAPTURE(theta);
            CAPTURE(p);
            const double zw = rt::std_normal_quantile_oracle(p) - rt::std_normal_quantile_oracle(1.0 - theta);
            CHECK(std::abs(distortion_eval(wang, theta, p) - rt::std_normal_cdf(zw)) <= 1e-11);
            CHECK(distortion_eval(power, theta, p) == doctest::Approx(std::pow(p, (1.0 - theta) / theta)).epsilon(1e-12));
            const double d = theta <= 0.5 ? std::max(p - (1.0 - 2.0 * theta), 0.0) / (2.0 * theta)
                                          : std::min(p / (2.0 * (1.0 - theta)), 1.0);
            CHECK(std::abs(distortion_eval(dual, theta, p) - d) <= 1e-14);
            CHECK(distortion_eval(var, theta, p) == (p > 1.0 - theta ? 1.0 : 0.0));
        }
        CHECK(distortion_eval(wang, theta, 0.0) == 0.0);
        CHECK(distortion_eval(wang, theta, 1.0) == 1.0);
    }
}

TEST_CASE("parameters outside the interval are rejected") {
    CHECK_THROWS_AS(distortion_eval(DistortionFamily::wang(), 0.0, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(distortion_eval(DistortionFamily::wang(), 1.0, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(distortion_eval(DistortionFamily::power(), 1.3, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(distortion_eval(DistortionFamily::tvar_dual(), -0.1, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(distortion_eval(DistortionFamily::wang(), 0.3, 1.2), std::invalid_argument);
    CHECK_NOTHROW(distortion_eval(DistortionFamily::var_indicator(), 1.0, 0.5));
}

TEST_CASE("dual family is built from the tail-mean distortions") {
    const auto dual = DistortionFamily::tvar_dual();
    for (int a = 1; a <= 50; ++a) {
        const double theta = 0.01 * a;
        for (int b = 0; b <= 100; ++b) {
            const double p = 0.01 * b;
            const double want = 1.0 - tvar_block(1.0 - 2.0 * theta, 1.0 - p);
            REQUIRE(std::abs(distortion_eval(dual, theta, p) - want) <= 1e-12);
        }
    }
}

TEST_CASE("risk measure examples") {
    const EmpiricalDistribution point(std::vector<double>(20, 3.25));
    for (auto fam : {DistortionFamily::wang(), DistortionFamily::power(), DistortionFamily::tvar_dual()}) {
        CHECK(distortion_risk_measure(fam, 0.3, point) == doctest::Approx(3.25).epsilon(1e-14));
    }
    const std::vector<double> xs = normal_sample(5000, 1.0, 2.0, 4);
    const EmpiricalDistribution dist(xs);
    CHECK(distortion_risk_measure(DistortionFamily::tvar_dual(), 0.5, dist) ==
          doctest::Approx(rt::mean_of(xs)).epsilon(1e-12));
    CHECK(distortion_risk_measure(DistortionFamily::wang(), 0.0, dist) == dist.min());
    CHECK(distortion_risk_measure(DistortionFamily::wang(), 1.0, dist) == dist.max());
}

TEST_CASE("Wang risk measure of a normal sample against the distorted survival integral") {
    const double mu = 1.0;
    const double sigma = 2.0;
    const double theta = 0.9;
    const auto wang = DistortionFamily::wang();
    auto d = [&](double p) {
        return rt::std_normal_cdf(rt::std_normal_quantile_oracle(p) - rt::std_normal_quantile_oracle(1.0 - theta));
    };
    // rho = int_0^inf D(Sbar(x)) dx - int_-inf^0 (1 - D(Sbar(x))) dx for the exact normal
    auto sbar = [&](double x) { return rt::std_normal_cdf(-(x - mu) / sigma); };
    const double oracle = rt::simpson([&](double x) { return d(sbar(x)); }, 0.0, mu + 14.0 * sigma, 40000) -
                          rt::simpson([&](double x) { return 1.0 - d(sbar(x)); }, mu - 14.0 * sigma, 0.0, 40000);
    CHECK(oracle == doctest::Approx(mu + sigma * rt::std_normal_quantile_oracle(theta)).epsilon(1e-8));

    // standard error from replicate samples
    std::vector<double> reps;
    for (std::uint64_t seed = 100; seed < 110; ++seed) {
        reps.push_back(distortion_risk_measure(wang, theta, EmpiricalDistribution(normal_sample(10000, mu, sigma, seed))));
    }
    const double at_full = distortion_risk_measure(wang, theta, EmpiricalDistribution(normal_sample(100000, mu, sigma, 7)));
    const double se = rt::sd_of(reps) / std::sqrt(10.0);
    CHECK(std::abs(at_full - oracle) <= 3.0 * se);
}

TEST_CASE("Stieltjes sum equals the survival-integral form on discrete data") {
    std::vector<double> xs = normal_sample(400, -0.5, 1.5, 12);
    // ties and both signs
    xs.push_back(0.0);
    xs.push_back(0.0);
    xs.push_back(xs[3]);
    const EmpiricalDistribution dist(xs);
    std::vector<double> w(xs.size());
    for (std::size_t k = 0; k < w.size(); ++k) {
        w[k] = 1.0 + static_cast<double>(k % 7);
    }
    const EmpiricalDistribution weighted(xs, w);
    for (auto fam : {DistortionFamily::wang(), DistortionFamily::power(), DistortionFamily::tvar_dual(),
                     DistortionFamily::var_indicator()}) {
        for (double theta : {0.05, 0.3, 0.5, 0.77, 0.95}) {
            CAPTURE(fam.name());
            CAPTURE(theta);
            for (const auto* dd : {&dist, &weighted}) {
                const double a = distortion_risk_measure(fam, theta, *dd);
                const double b = distortion_risk_measure_survival_form(fam, theta, *dd);
                CHECK(std::abs(a - b) <= 1e-12 * (1.0 + std::abs(a)));
            }
        }
    }
}

TEST_CASE("risk measure is monotone in theta and tends to the sample extremes") {
    const EmpiricalDistribution dist(normal_sample(3000, 2.0, 1.0, 21));
    for (auto fam : {DistortionFamily::wang(), DistortionFamily::power(), DistortionFamily::tvar_dual(),
                     DistortionFamily::var_indicator()}) {
        CAPTURE(fam.name());
        double prev = -INFINITY;
        bool monotone = true;
        for (int j = 1; j < 400; ++j) {
            const double r = distortion_risk_measure(fam, j / 400.0, dist);
            monotone = monotone && r >= prev - 1e-12;
            prev = r;
        }
        CHECK(monotone);
        // approaching the ends through the working coordinate
        const auto& par = fam.parametrization();
        const double near_lo = distortion_risk_measure_coord(fam, par.coord_at(1e-7), dist);
        const double near_hi = distortion_risk_measure_coord(fam, par.coord_at(1.0 - 1e-7), dist);
        const double range = dist.max() - dist.min();
        CHECK(near_lo - dist.min() <= 1e-2 * range);
        CHECK(dist.max() - near_hi <= 1e-2 * range);
        CHECK(near_lo >= dist.min() - 1e-12);
        CHECK(near_hi <= dist.max() + 1e-12);
    }
}

TEST_CASE("Stieltjes kernel agrees with the direct risk measure") {
    const EmpiricalDistribution dist(normal_sample(2000, 0.0, 1.0, 31));
    for (auto fam : {DistortionFamily::wang(), DistortionFamily::power(), DistortionFamily::tvar_dual()}) {
        const StieltjesKernel kernel(fam, dist);
        for (double t : {0.1, 0.4, 0.5, 0.8, 0.97}) {
            const double coord = fam.parametrization().coord_at(t);
            std::vector<double> inc(kernel.size());
            kernel.increments(coord, inc);
            double acc = 0.0;
            double mass = 0.0;
            for (std::size_t k = 0; k < inc.size(); ++k) {
                acc += inc[k] * dist.value(k);
                mass += inc[k];
                REQUIRE(inc[k] >= -1e-15);
            }
            CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
            const double direct = distortion_risk_measure_coord(fam, coord, dist);
            CHECK(std::abs(acc - direct) <= 1e-11);
            CHECK(std::abs(kernel.risk_measure(coord) - direct) <= 1e-11);
        }
    }
    const StieltjesKernel var(DistortionFamily::var_indicator(), dist);
    const auto atom = var.single_atom(0.3);
    REQUIRE(atom.has_value());
    CHECK(dist.value(*atom) == doctest::Approx(distortion_risk_measure(DistortionFamily::var_indicator(), 0.3, dist)));
}

TEST_CASE("family validation") {
    const auto wang = validate_family(DistortionFamily::wang());
    const auto power = validate_family(DistortionFamily::power());
    const auto dual = validate_family(DistortionFamily::tvar_dual());
    const auto var = validate_family(DistortionFamily::var_indicator());
    CHECK(wang.all_pass());
    CHECK(power.all_pass());
    CHECK(dual.all_pass());
    CHECK_FALSE(var.theta_continuous);
    CHECK(var.boundary);
    CHECK(var.p_monotone);
    CHECK(var.theta_monotone);
    CHECK(var.limit_a);
    CHECK(var.limit_b);
    const std::vector<double> small(10, 0.5);
    CHECK_FALSE(validate_family(DistortionFamily::wang(), small, small).all_pass());
}

TEST_CASE("user tables from CSV and JSON") {
    // D_theta(p) = p^((1 - theta) / theta) tabulated on a coarse grid
    std::ostringstream csv;
    csv.precision(17);
    std::vector<double> thetas = {0.2, 0.4, 0.5, 0.6, 0.8};
    std::vector<double> ps;
    for (int j = 0; j <= 10; ++j) {
        ps.push_back(j / 10.0);
    }
    csv << "theta";
    for (double p : ps) {
        csv << ',' << p;
    }
    csv << '\n';
    for (double th : thetas) {
        csv << th;
        for (double p : ps) {
            csv << ',' << std::pow(p, (1.0 - th) / th);
        }
        csv << '\n';
    }
    std::istringstream in(csv.str());
    const DistortionFamily table = load_user_table_csv(in);
    CHECK(table.kind() == DistortionKind::user_table);
    CHECK(distortion_eval(table, 0.5, 0.3) == doctest::Approx(0.3).epsilon(1e-12));
    // linear in theta between rows
    const double mid = 0.5 * (std::pow(0.3, 1.5) + std::pow(0.3, 1.0));
    CHECK(distortion_eval(table, 0.45, 0.3) == doctest::Approx(mid).epsilon(1e-12));

    const DistortionFamily back = distortion_from_json(distortion_to_json(table));
    CHECK(distortion_eval(back, 0.7, 0.45) == doctest::Approx(distortion_eval(table, 0.7, 0.45)).epsilon(1e-14));

    CHECK(distortion_from_json(nlohmann::json("wang")).kind() == DistortionKind::wang);
    CHECK(distortion_from_json(nlohmann::json::parse(R"({"kind": "power"})")).kind() == DistortionKind::power);
    CHECK_THROWS_AS(distortion_from_json(nlohmann::json("gini")), ConfigError);

    // a row that decreases in p is rejected at load
    std::istringstream bad("theta,0,0.5,1\n0.2,0,0.6,1\n0.8,0,0.4,1\n0.9,0,0.7,0.5\n");
    CHECK_THROWS_AS(load_user_table_csv(bad), ConfigError);
}
