#include <riskshare/estimators.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <riskshare/errors.hpp>

namespace riskshare {

EmpiricalDistribution::EmpiricalDistribution(std::vector<double> values)
    : EmpiricalDistribution(std::move(values), {}) {}

EmpiricalDistribution::EmpiricalDistribution(std::vector<double> values, std::vector<double> weights) {
    if (values.empty()) {
        throw std::invalid_argument("empirical distribution needs at least one value");
    }
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("empirical distribution values must be finite");
        }
    }
    const std::size_t n = values.size();
    if (weights.empty()) {
        values_ = std::move(values);
        std::sort(values_.begin(), values_.end());
        return;
    }
    if (weights.size() != n) {
        throw std::invalid_argument("weights and values differ in length");
    }
    double total = 0.0;
    for (double w : weights) {
        if (!(w > 0.0) || !std::isfinite(w)) {
            throw std::invalid_argument("weights must be positive and finite");
        }
        total += w;
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    values_.resize(n);
    weights_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        values_[k] = values[order[k]];
        weights_[k] = weights[order[k]] / total;
    }
    cum_.resize(n);
    surv_.resize(n);
    double c = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        c += weights_[k];
        cum_[k] = c;
    }
    cum_[n - 1] = 1.0;
    // survival accumulated from the top keeps small tail probabilities accurate
    double t = 0.0;
    for (std::size_t k = n; k-- > 0;) {
        surv_[k] = t;
        t += weights_[k];
    }
}

double EmpiricalDistribution::weight(std::size_t k) const {
    return weights_.empty() ? 1.0 / static_cast<double>(values_.size()) : weights_[k];
}

double EmpiricalDistribution::cdf_at(std::size_t k) const {
    if (weights_.empty()) {
        return static_cast<double>(k + 1) / static_cast<double>(values_.size());
    }
    return cum_[k];
}

double EmpiricalDistribution::survival_after(std::size_t k) const {
    if (weights_.empty()) {
        return static_cast<double>(values_.size() - 1 - k) / static_cast<double>(values_.size());
    }
    return surv_[k];
}

double EmpiricalDistribution::cdf(double x) const {
    const auto it = std::upper_bound(values_.begin(), values_.end(), x);
    if (it == values_.begin()) {
        return 0.0;
    }
    return cdf_at(static_cast<std::size_t>(it - values_.begin()) - 1);
}

double EmpiricalDistribution::mean() const {
    double m = 0.0;
    for (std::size_t k = 0; k < values_.size(); ++k) {
        m += weight(k) * values_[k];
    }
    return m;
}

double EmpiricalDistribution::variance() const {
    const double m = mean();
    double v = 0.0;
    for (std::size_t k = 0; k < values_.size(); ++k) {
        v += weight(k) * (values_[k] - m) * (values_[k] - m);
    }
    return v;
}

double EmpiricalDistribution::tail_mean(double level) const {
    if (!(level >= 0.0 && level <= 1.0)) {
        throw std::invalid_argument("tail_mean: level must lie in [0,1]");
    }
    if (values_.empty()) {
        throw std::invalid_argument("tail_mean: empty distribution");
    }
    const double tail = 1.0 - level;
    if (tail <= 0.0) {
        return values_.back();
    }
    double acc = 0.0;
    double above = 1.0;  // survival before atom k
    for (std::size_t k = 0; k < values_.size(); ++k) {
        const double after = survival_after(k);
        const double overlap = std::min(above, tail) - after;
        if (overlap > 0.0) {
            acc += values_[k] * overlap;
        }
        above = after;
    }
    return acc / tail;
}

std::size_t EmpiricalDistribution::left_index(double p) const {
    const std::size_t n = values_.size();
    if (weights_.empty()) {
        const double nd = static_cast<double>(n);
        long long k = static_cast<long long>(std::ceil(p * nd)) - 1;
        k = std::clamp<long long>(k, 0, static_cast<long long>(n) - 1);
        while (k > 0 && static_cast<double>(k) / nd >= p) {
            --k;
        }
        while (k + 1 < static_cast<long long>(n) && static_cast<double>(k + 1) / nd < p) {
            ++k;
        }
        return static_cast<std::size_t>(k);
    }
    const auto it = std::lower_bound(cum_.begin(), cum_.end(), p);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cum_.begin()), n - 1);
}

std::size_t EmpiricalDistribution::right_index(double p) const {
    const std::size_t n = values_.size();
    if (p >= 1.0) {
        return n - 1;
    }
    if (weights_.empty()) {
        const double nd = static_cast<double>(n);
        long long k = static_cast<long long>(std::floor(p * nd));
        k = std::clamp<long long>(k, 0, static_cast<long long>(n) - 1);
        while (k > 0 && static_cast<double>(k) / nd > p) {
            --k;
        }
        while (k + 1 < static_cast<long long>(n) && static_cast<double>(k + 1) / nd <= p) {
            ++k;
        }
        return static_cast<std::size_t>(k);
    }
    const auto it = std::upper_bound(cum_.begin(), cum_.end(), p);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cum_.begin()), n - 1);
}

EmpiricalDistribution aggregate_distribution(const ScenarioSet& scen) {
    std::vector<double> s(scen.aggregate().begin(), scen.aggregate().end());
    std::vector<double> w(scen.probabilities().begin(), scen.probabilities().end());
    return EmpiricalDistribution(std::move(s), std::move(w));
}

EmpiricalDistribution unit_distribution(const ScenarioSet& scen, std::size_t i) {
    if (i >= scen.units()) {
        throw std::invalid_argument("unit index out of range");
    }
    std::vector<double> w(scen.probabilities().begin(), scen.probabilities().end());
    return EmpiricalDistribution(scen.column(i), std::move(w));
}

double empirical_quantile(const EmpiricalDistribution& dist, double p, QuantileSide side) {
    if (dist.empty()) {
        throw std::invalid_argument("empirical_quantile: empty distribution");
    }
    if (!(p >= 0.0 && p <= 1.0)) {
        throw std::invalid_argument("empirical_quantile: p must lie in [0,1]");
    }
    return dist.value(side == QuantileSide::left ? dist.left_index(p) : dist.right_index(p));
}

BinnedConditionalMean conditional_mean_given_sum(const ScenarioSet& scen, std::size_t bins,
                                                 std::size_t min_per_bin) {
    const std::size_t n = scen.size();
    if (bins < 2) {
        throw std::invalid_argument("conditional_mean_given_sum: need at least two bins");
    }
    if (n < min_per_bin * bins) {
        throw std::invalid_argument("conditional_mean_given_sum: too few scenarios for the requested bins");
    }
    const auto s = scen.aggregate();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });

    // bin boundaries as positions in the sorted order, moved forward past ties
    std::vector<std::size_t> starts;
    std::size_t pos = 0;
    std::size_t remaining_bins = bins;
    while (pos < n) {
        const std::size_t remaining = n - pos;
        const std::size_t target = std::max<std::size_t>(1, (remaining + remaining_bins / 2) / remaining_bins);
        std::size_t end = std::min(n, pos + target);
        while (end < n && s[order[end]] == s[order[end - 1]]) {
            ++end;
        }
        if (remaining_bins > 1 && n - end < target / 2) {
            end = n;
        }
        starts.push_back(pos);
        pos = end;
        if (remaining_bins > 1) {
            --remaining_bins;
        }
    }
    starts.push_back(n);
    return binned_mean_from_starts(scen, order, starts);
}

BinnedConditionalMean conditional_mean_by_value(const ScenarioSet& scen) {
    const std::size_t n = scen.size();
    if (n == 0) {
        throw std::invalid_argument("conditional_mean_by_value: empty scenario set");
    }
    const auto s = scen.aggregate();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });
    std::vector<std::size_t> starts{0};
    for (std::size_t j = 1; j < n; ++j) {
        if (s[order[j]] != s[order[j - 1]]) {
            starts.push_back(j);
        }
    }
    starts.push_back(n);
    return binned_mean_from_starts(scen, order, starts);
}

BinnedConditionalMean binned_mean_from_starts(const ScenarioSet& scen, const std::vector<std::size_t>& order,
                                              const std::vector<std::size_t>& starts) {
    const std::size_t units = scen.units();
    const auto s = scen.aggregate();
    BinnedConditionalMean out;
    out.units_ = units;
    out.s_min_ = s[order.front()];
    out.s_max_ = s[order.back()];
    const std::size_t nb = starts.size() - 1;
    out.lo_.resize(nb);
    out.hi_.resize(nb);
    out.s_mean_.resize(nb);
    out.count_.resize(nb);
    out.mean_.assign(nb * units, 0.0);
    out.slope_.assign(nb * units, 0.0);

    for (std::size_t b = 0; b < nb; ++b) {
        const std::size_t a = starts[b];
        const std::size_t e = starts[b + 1];
        out.lo_[b] = s[order[a]];
        out.hi_[b] = (b + 1 < nb) ? s[order[e]] : out.s_max_;
        out.count_[b] = e - a;
        double w = 0.0;
        double sm = 0.0;
        for (std::size_t j = a; j < e; ++j) {
            const double p = scen.probability(order[j]);
            w += p;
            sm += p * s[order[j]];
        }
        sm /= w;
        out.s_mean_[b] = sm;
        double var = 0.0;
        for (std::size_t j = a; j < e; ++j) {
            const double d = s[order[j]] - sm;
            var += scen.probability(order[j]) * d * d;
        }
        var /= w;
        for (std::size_t i = 0; i < units; ++i) {
            double m = 0.0;
            for (std::size_t j = a; j < e; ++j) {
                m += scen.probability(order[j]) * scen.loss(order[j], i);
            }
            m /= w;
            double cov = 0.0;
            for (std::size_t j = a; j < e; ++j) {
                cov += scen.probability(order[j]) * (scen.loss(order[j], i) - m) * (s[order[j]] - sm);
            }
            cov /= w;
            out.mean_[b * units + i] = m;
            const double scale = 1.0 + sm * sm;
            out.slope_[b * units + i] = var > 1e-24 * scale ? cov / var : 1.0 / static_cast<double>(units);
        }
    }
    return out;
}

std::size_t BinnedConditionalMean::locate(double s) const {
    const auto it = std::upper_bound(lo_.begin(), lo_.end(), s);
    if (it == lo_.begin()) {
        return 0;
    }
    return static_cast<std::size_t>(it - lo_.begin()) - 1;
}

double BinnedConditionalMean::evaluate(double s, std::size_t i) const {
    const double x = std::clamp(s, s_min_, s_max_);
    const std::size_t b = locate(x);
    return mean(b, i) + slope(b, i) * (x - s_mean_[b]);
}

void BinnedConditionalMean::evaluate(double s, std::span<double> out) const {
    const double x = std::clamp(s, s_min_, s_max_);
    const std::size_t b = locate(x);
    for (std::size_t i = 0; i < units_; ++i) {
        out[i] = mean(b, i) + slope(b, i) * (x - s_mean_[b]);
    }
}

void BinnedConditionalMean::write_csv(std::ostream& os) const {
    os << "bin_lo,bin_hi,s_mean";
    for (std::size_t i = 0; i < units_; ++i) {
        os << ",x" << (i + 1) << "_mean";
    }
    os << ",count\n";
    os.precision(17);
    for (std::size_t b = 0; b < bins(); ++b) {
        os << lo_[b] << ',' << hi_[b] << ',' << s_mean_[b];
        for (std::size_t i = 0; i < units_; ++i) {
            os << ',' << mean(b, i);
        }
        os << ',' << count_[b] << '\n';
    }
}

double source_quantile(const QuantileSource& src, double u, QuantileSide side) {
    if (const auto* m = std::get_if<MarginalSpec>(&src)) {
        return side == QuantileSide::left ? marginal_quantile(*m, u) : marginal_quantile_right(*m, u);
    }
    return empirical_quantile(std::get<EmpiricalDistribution>(src), u, side);
}

double comonotonic_sum_quantile(std::span<const QuantileSource> parts, double u, QuantileSide side) {
    if (!(u >= 0.0 && u <= 1.0)) {
        throw std::invalid_argument("comonotonic_sum_quantile: u must lie in [0,1]");
    }
    double total = 0.0;
    for (const auto& p : parts) {
        total += source_quantile(p, u, side);
    }
    return total;
}

double comonotonic_sum_quantile(std::span<const MarginalSpec> parts, double u) {
    std::vector<QuantileSource> src(parts.begin(), parts.end());
    return comonotonic_sum_quantile(src, u);
}

double comonotonic_sum_quantile(std::span<const EmpiricalDistribution> parts, double u) {
    std::vector<QuantileSource> src(parts.begin(), parts.end());
    return comonotonic_sum_quantile(src, u);
}

AlphaMixedRoot alpha_mixed_inverse_root(const std::function<double(double)>& comono_quantile, double s,
                                        double lower_bound, double upper_bound) {
    const double tol = 1e-12 * (1.0 + std::abs(s));
    if (!(s >= lower_bound - tol && s <= upper_bound + tol)) {
        throw DomainError("alpha_mixed_inverse_root: s lies outside the comonotonic-sum range");
    }
    AlphaMixedRoot r;
    if (s >= upper_bound) {
        r.u = r.u_lo = r.u_hi = 1.0;
        r.left_value = r.right_value = upper_bound;
        return r;
    }
    double lo = 0.0;
    double hi = 1.0;
    double q_lo = lower_bound;
    double q_hi = upper_bound;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) {
            break;
        }
        const double q = comono_quantile(mid);
        if (q <= s) {
            lo = mid;
            q_lo = q;
        } else {
            hi = mid;
            q_hi = q;
        }
    }
    if (lo == 0.0) {
        q_lo = comono_quantile(0.0);
    }
    r.u_lo = lo;
    r.u_hi = hi;
    r.left_value = q_lo;
    r.right_value = q_hi;
    const double jump = q_hi - q_lo;
    if (jump <= 1e-10 * (1.0 + std::abs(s)) || !std::isfinite(q_lo)) {
        r.u = lo;
        r.alpha = 1.0;
    } else {
        r.u = lo;
        r.alpha = std::clamp((q_hi - s) / jump, 0.0, 1.0);
    }
    return r;
}

AlphaMixedRoot alpha_mixed_inverse_root(const std::function<double(double)>& comono_quantile, double s) {
    // the right limit at 0 is approached from the first bisection point
    const double lower = comono_quantile(0x1.0p-60);
    const double upper = comono_quantile(1.0);
    return alpha_mixed_inverse_root(comono_quantile, s, std::min(lower, comono_quantile(0.0)), upper);
}

} // namespace riskshare
