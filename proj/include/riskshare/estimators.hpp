#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <variant>
#include <vector>

#include <riskshare/scenario.hpp>

namespace riskshare {

enum class QuantileSide { left, right };

class EmpiricalDistribution {
public:
    EmpiricalDistribution() = default;
    explicit EmpiricalDistribution(std::vector<double> values);
    // weights are normalised to sum to 1; an empty weight vector means uniform
    EmpiricalDistribution(std::vector<double> values, std::vector<double> weights);

    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }
    bool uniform() const { return weights_.empty(); }
    std::span<const double> values() const { return values_; }
    double value(std::size_t k) const { return values_[k]; }
    double weight(std::size_t k) const;

    // P(X <= x_(k)) and P(X > x_(k)) taken positionally over the sorted atoms.
    double cdf_at(std::size_t k) const;
    double survival_after(std::size_t k) const;

    double cdf(double x) const;
    double min() const { return values_.front(); }
    double max() const { return values_.back(); }
    double mean() const;
    double variance() const;
    // (1/(1-level)) * integral of the quantile over [level, 1]; level 1 gives the maximum
    double tail_mean(double level) const;

    std::size_t left_index(double p) const;
    std::size_t right_index(double p) const;

private:
    std::vector<double> values_;
    std::vector<double> weights_;
    std::vector<double> cum_;
    std::vector<double> surv_;
};

EmpiricalDistribution aggregate_distribution(const ScenarioSet& scen);
EmpiricalDistribution unit_distribution(const ScenarioSet& scen, std::size_t i);

double empirical_quantile(const EmpiricalDistribution& dist, double p, QuantileSide side);

class BinnedConditionalMean {
public:
    std::size_t bins() const { return lo_.size(); }
    std::size_t units() const { return units_; }
    double bin_lo(std::size_t b) const { return lo_[b]; }
    double bin_hi(std::size_t b) const { return hi_[b]; }
    double s_mean(std::size_t b) const { return s_mean_[b]; }
    double mean(std::size_t b, std::size_t i) const { return mean_[b * units_ + i]; }
    double slope(std::size_t b, std::size_t i) const { return slope_[b * units_ + i]; }
    std::size_t count(std::size_t b) const { return count_[b]; }

    std::size_t locate(double s) const;
    // Within a bin the estimate is the bin mean plus a least-squares slope in s;
    // slopes sum to one so the components always add up to s inside the range.
    double evaluate(double s, std::size_t i) const;
    void evaluate(double s, std::span<double> out) const;

    void write_csv(std::ostream& os) const;

    friend BinnedConditionalMean binned_mean_from_starts(const ScenarioSet& scen,
                                                         const std::vector<std::size_t>& order,
                                                         const std::vector<std::size_t>& starts);

private:
    std::size_t units_ = 0;
    double s_min_ = 0.0;
    double s_max_ = 0.0;
    std::vector<double> lo_, hi_, s_mean_, mean_, slope_;
    std::vector<std::size_t> count_;
};

// Equal-count bins over sorted S. Bin edges never split tied values of S, so on a
// discrete joint with one atom per bin the estimate is the exact conditional mean.
BinnedConditionalMean conditional_mean_given_sum(const ScenarioSet& scen, std::size_t bins,
                                                 std::size_t min_per_bin = 10);
// One bin per distinct value of S: the exact conditional mean of a discrete joint.
BinnedConditionalMean conditional_mean_by_value(const ScenarioSet& scen);
// order sorts the scenarios by S; starts are bin start positions in that order, ending with N
BinnedConditionalMean binned_mean_from_starts(const ScenarioSet& scen, const std::vector<std::size_t>& order,
                                              const std::vector<std::size_t>& starts);

using QuantileSource = std::variant<MarginalSpec, EmpiricalDistribution>;

double source_quantile(const QuantileSource& src, double u, QuantileSide side = QuantileSide::left);

double comonotonic_sum_quantile(std::span<const QuantileSource> parts, double u,
                                QuantileSide side = QuantileSide::left);
double comonotonic_sum_quantile(std::span<const MarginalSpec> parts, double u);
double comonotonic_sum_quantile(std::span<const EmpiricalDistribution> parts, double u);

struct AlphaMixedRoot {
    double u = 0.0;      // F(s) for the comonotonic sum
    double alpha = 1.0;
    double u_lo = 0.0;   // bracket end with quantile <= s
    double u_hi = 0.0;   // bracket end with quantile > s
    double left_value = 0.0;
    double right_value = 0.0;
};

// Monotone bisection on u -> quantile(u); the bracket is narrowed until it can no
// longer shrink in double precision or 200 halvings have been done.
AlphaMixedRoot alpha_mixed_inverse_root(const std::function<double(double)>& comono_quantile, double s,
                                        double lower_bound, double upper_bound);
AlphaMixedRoot alpha_mixed_inverse_root(const std::function<double(double)>& comono_quantile, double s);

} // namespace riskshare
