#include <riskshare/allocation.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <riskshare/errors.hpp>

namespace riskshare {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string number(double x) {
    std::ostringstream os;
    os.precision(12);
    os << x;
    return os.str();
}

std::vector<PreferenceSpec> expand_prefs(const std::vector<PreferenceSpec>& prefs, std::size_t n) {
    if (prefs.empty()) {
        return std::vector<PreferenceSpec>(n, PhysicalPreference{});
    }
    if (prefs.size() != n) {
        throw ConfigError("expected one preference per unit (" + std::to_string(n) + "), got " +
                          std::to_string(prefs.size()));
    }
    return prefs;
}

std::vector<double> scenario_probs(const ScenarioSet& scen) {
    if (scen.weighted()) {
        return {scen.probabilities().begin(), scen.probabilities().end()};
    }
    return {};
}

std::vector<std::size_t> order_by(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    return order;
}

// Weights of Q_i per scenario, summing to one.
std::vector<double> preference_weights(const PreferenceSpec& pref, const ScenarioSet& scen, std::size_t i,
                                       double theta) {
    const std::size_t n = scen.size();
    std::vector<double> w(n);
    if (std::holds_alternative<PhysicalPreference>(pref)) {
        for (std::size_t k = 0; k < n; ++k) {
            w[k] = scen.probability(k);
        }
        return w;
    }
    if (const auto* wp = std::get_if<WeightPreference>(&pref)) {
        double total = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double h = wp->h(scen.loss(k, i));
            if (!(h >= 0.0) || !std::isfinite(h)) {
                throw DomainError("preference weight must be finite and non-negative, got " + number(h));
            }
            w[k] = scen.probability(k) * h;
            total += w[k];
        }
        if (!(total > 0.0)) {
            throw DomainError("zero-mass preference weights for unit " + std::to_string(i + 1));
        }
        for (double& x : w) {
            x /= total;
        }
        return w;
    }
    const auto& tp = std::get<TailPreference>(pref);
    const double level = tp.level ? *tp.level : theta;
    if (!(level >= 0.0 && level <= 1.0)) {
        throw DomainError("tail preference level " + number(level) + " lies outside [0,1]");
    }
    const std::vector<double> col = scen.column(i);
    const auto order = order_by(col);
    const double tail = 1.0 - level;
    if (tail <= 0.0) {
        w[order.back()] = 1.0;
        return w;
    }
    // density 1{X above its level-quantile} / (1 - level), splitting the boundary atom
    double after = 1.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double above = after;
        after = std::max(0.0, above - scen.probability(order[j]));
        if (j + 1 == n) {
            after = 0.0;
        }
        const double overlap = std::min(above, tail) - after;
        w[order[j]] = overlap > 0.0 ? overlap / tail : 0.0;
    }
    return w;
}

double weighted_mean_of(const std::vector<double>& w, const ScenarioSet& scen, std::size_t i) {
    double m = 0.0;
    for (std::size_t k = 0; k < scen.size(); ++k) {
        m += w[k] * scen.loss(k, i);
    }
    return m;
}

void check_betas(const std::vector<double>& b, std::size_t n, const std::string& where) {
    if (b.size() != n) {
        throw ConfigError(where + ": expected " + std::to_string(n) + " betas, got " + std::to_string(b.size()));
    }
    double sum = 0.0;
    for (double x : b) {
        if (!std::isfinite(x)) {
            throw ConfigError(where + ": betas must be finite");
        }
        sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
        throw ConfigError(where + ": betas must sum to 1 (sum is " + number(sum) + ")");
    }
}

const DistortionFamily& unit_family(const Holistic& h, std::size_t i) {
    if (h.units.empty()) {
        return h.aggregate;
    }
    if (h.units.size() == 1) {
        return h.units.front();
    }
    return h.units.at(i);
}

// coordinate of `to` carrying the same theta as coordinate c of `from`
double convert_coord(const Parametrization& from, const Parametrization& to, double c) {
    if (from.kind() == to.kind() && from.scale() == to.scale() && from.theta_lo() == to.theta_lo() &&
        from.theta_hi() == to.theta_hi()) {
        return c;
    }
    return to.coord_of(from.theta_of(c));
}

double checked_coord(const Parametrization& p, double theta) {
    if (std::isnan(theta)) {
        throw DomainError("allocation parameter is NaN");
    }
    if (theta < p.theta_lo() || theta > p.theta_hi()) {
        throw DomainError("parameter " + number(theta) + " lies outside [" + number(p.theta_lo()) + ", " +
                          number(p.theta_hi()) + "]");
    }
    return p.coord_of(theta);
}

// sd of the finite entries
double spread(const std::vector<double>& v) {
    double m = 0.0;
    std::size_t c = 0;
    for (double x : v) {
        if (std::isfinite(x)) {
            m += x;
            ++c;
        }
    }
    if (c < 2) {
        return 0.0;
    }
    m /= static_cast<double>(c);
    double var = 0.0;
    for (double x : v) {
        if (std::isfinite(x)) {
            var += (x - m) * (x - m);
        }
    }
    return std::sqrt(var / static_cast<double>(c - 1));
}

// ---------------------------------------------------------------------------

class OptSquaredModel final : public CapitalModel {
public:
    OptSquaredModel(OptSquared family, const ScenarioSet& scen, AggregateCapital agg)
        : family_(std::move(family)), agg_(std::move(agg)), n_(scen.units()) {
        prefs_ = expand_prefs(family_.prefs, n_);
        fixed_.assign(n_, 0.0);
        tail_.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            const auto* tp = std::get_if<TailPreference>(&prefs_[i]);
            if (tp && !tp->level) {
                tail_[i] = unit_distribution(scen, i);
                theta_tail_ = true;
            } else {
                fixed_[i] = preference_mean(prefs_[i], scen, i, 0.0);
            }
        }
    }

    std::size_t units() const override { return n_; }
    const Parametrization& parametrization() const override { return agg_.param; }
    double aggregate(double coord) const override { return agg_.k_coord(coord); }
    void allocate(double coord, std::span<double> out) const override {
        allocate_given(coord, agg_.k_coord(coord), out);
    }
    void allocate_given(double coord, double k, std::span<double> out) const override {
        const double theta = agg_.param.theta_of(coord);
        const std::vector<double> beta = betas_at(family_, theta, n_);
        double total = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            if (tail_[i].empty()) {
                out[i] = fixed_[i];
            } else {
                if (!(theta >= 0.0 && theta <= 1.0)) {
                    throw DomainError("tail preference level " + number(theta) + " lies outside [0,1]");
                }
                out[i] = tail_[i].tail_mean(theta);
            }
            total += out[i];
        }
        const double gap = k - total;
        for (std::size_t i = 0; i < n_; ++i) {
            out[i] += beta[i] * gap;
        }
    }
    bool cheap() const override { return !theta_tail_ && agg_.cheap; }
    bool cheap_given() const override { return !theta_tail_; }
    std::string describe() const override { return "opt_squared/" + agg_.name; }

private:
    OptSquared family_;
    AggregateCapital agg_;
    std::size_t n_;
    std::vector<PreferenceSpec> prefs_;
    std::vector<double> fixed_;
    std::vector<EmpiricalDistribution> tail_;
    bool theta_tail_ = false;
};

class OptAbsoluteModel final : public CapitalModel {
public:
    OptAbsoluteModel(const OptAbsolute& family, const ScenarioSet& scen, AggregateCapital agg)
        : agg_(std::move(agg)), n_(scen.units()), marginals_(preference_marginals(family, scen)) {}

    std::size_t units() const override { return n_; }
    const Parametrization& parametrization() const override { return agg_.param; }
    double aggregate(double coord) const override { return agg_.k_coord(coord); }
    void allocate(double coord, std::span<double> out) const override {
        allocate_given(coord, agg_.k_coord(coord), out);
    }
    void allocate_given(double, double k, std::span<double> out) const override {
        const std::vector<double> r = opt_absolute_allocate(k, marginals_);
        std::copy(r.begin(), r.end(), out.begin());
    }
    bool cheap() const override { return agg_.cheap; }
    bool cheap_given() const override { return true; }
    std::string describe() const override { return "opt_absolute/" + agg_.name; }

private:
    AggregateCapital agg_;
    std::size_t n_;
    std::vector<QuantileSource> marginals_;
};

class EulerModel final : public CapitalModel {
public:
    EulerModel(const EulerDistortion& family, const ScenarioSet& scen, const BinnedConditionalMean& cond)
        : kernel_(family.family, aggregate_distribution(scen)), n_(scen.units()) {
        if (cond.units() != n_) {
            throw std::invalid_argument("conditional mean has the wrong number of units");
        }
        const std::size_t atoms = kernel_.size();
        m_.resize(atoms * n_);
        for (std::size_t k = 0; k < atoms; ++k) {
            cond.evaluate(kernel_.dist().value(k), std::span<double>(m_.data() + k * n_, n_));
        }
    }

    std::size_t units() const override { return n_; }
    const Parametrization& parametrization() const override { return kernel_.family().parametrization(); }
    double aggregate(double coord) const override { return kernel_.risk_measure(coord); }
    void allocate(double coord, std::span<double> out) const override {
        if (auto k = kernel_.single_atom(coord)) {
            std::copy(m_.begin() + static_cast<long>(*k * n_), m_.begin() + static_cast<long>((*k + 1) * n_),
                      out.begin());
            return;
        }
        const std::size_t atoms = kernel_.size();
        std::vector<double> inc(atoms);
        kernel_.increments(coord, inc);
        std::fill(out.begin(), out.begin() + static_cast<long>(n_), 0.0);
        for (std::size_t k = 0; k < atoms; ++k) {
            const double d = inc[k];
            if (d == 0.0) {
                continue;
            }
            const double* row = m_.data() + k * n_;
            for (std::size_t i = 0; i < n_; ++i) {
                out[i] += row[i] * d;
            }
        }
    }
    double allocate_with_aggregate(double coord, std::span<double> out) const override {
        if (kernel_.single_atom(coord)) {
            allocate(coord, out);
            return kernel_.risk_measure(coord);
        }
        const std::size_t atoms = kernel_.size();
        std::vector<double> inc(atoms);
        kernel_.increments(coord, inc);
        std::fill(out.begin(), out.begin() + static_cast<long>(n_), 0.0);
        double acc = 0.0;
        for (std::size_t k = 0; k < atoms; ++k) {
            const double d = inc[k];
            // same summation order as StieltjesKernel::risk_measure
            acc += kernel_.dist().value(k) * d;
            if (d == 0.0) {
                continue;
            }
            const double* row = m_.data() + k * n_;
            for (std::size_t i = 0; i < n_; ++i) {
                out[i] += row[i] * d;
            }
        }
        return acc;
    }
    bool cheap() const override { return kernel_.family().kind() == DistortionKind::var_indicator; }
    std::string describe() const override { return "euler/" + kernel_.family().name(); }

private:
    StieltjesKernel kernel_;
    std::size_t n_;
    std::vector<double> m_; // conditional means at the sorted atoms of S
};

class WeightedModel final : public CapitalModel {
public:
    WeightedModel(WeightedRisk family, const ScenarioSet& scen, double scale)
        : family_(std::move(family)), n_(scen.units()), param_(Parametrization::real_line(1.0)) {
        const std::size_t n = scen.size();
        s_.assign(scen.aggregate().begin(), scen.aggregate().end());
        x_.assign(scen.losses().begin(), scen.losses().end());
        p_.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            p_[k] = scen.probability(k);
        }
        s_min_ = *std::min_element(s_.begin(), s_.end());
        s_max_ = *std::max_element(s_.begin(), s_.end());
        if (family_.kind == WeightKind::size_biased && s_min_ < 0.0) {
            throw DomainError("size-biased weights need a non-negative aggregate loss (min S = " + number(s_min_) +
                              ")");
        }
        switch (family_.kind) {
        case WeightKind::size_biased: {
            std::vector<double> logs(n);
            for (std::size_t k = 0; k < n; ++k) {
                logs[k] = std::log(s_[k]);
            }
            const double sd = spread(logs);
            param_ = Parametrization::real_line(scale > 0.0 ? scale : (sd > 0.0 ? 3.0 / sd : 1.0));
            break;
        }
        case WeightKind::esscher: {
            const double sd = spread(s_);
            param_ = Parametrization::real_line(scale > 0.0 ? scale : (sd > 0.0 ? 3.0 / sd : 1.0));
            break;
        }
        case WeightKind::custom:
            param_ = Parametrization::bounded(family_.table->theta.front(), family_.table->theta.back());
            break;
        }
    }

    std::size_t units() const override { return n_; }
    const Parametrization& parametrization() const override { return param_; }
    double aggregate(double coord) const override {
        double agg = 0.0;
        weights(coord, nullptr, &agg);
        return agg;
    }
    void allocate(double coord, std::span<double> out) const override { weights(coord, out.data(), nullptr); }
    double allocate_with_aggregate(double coord, std::span<double> out) const override {
        double agg = 0.0;
        weights(coord, out.data(), &agg);
        return agg;
    }
    std::string describe() const override {
        switch (family_.kind) {
        case WeightKind::size_biased:
            return "weighted/size_biased";
        case WeightKind::esscher:
            return "weighted/esscher";
        case WeightKind::custom:
            return "weighted/custom";
        }
        return "weighted";
    }

private:
    // weighted means of the units (out) and of S (agg); log-space with a max shift
    void weights(double coord, double* out, double* agg) const {
        const std::size_t n = s_.size();
        if (std::isnan(coord)) {
            throw DomainError("weighted allocation: parameter is NaN");
        }
        std::vector<double> lw(n);
        if (coord == kInf || coord == -kInf) {
            const double target = coord == kInf ? s_max_ : s_min_;
            for (std::size_t k = 0; k < n; ++k) {
                lw[k] = s_[k] == target ? 0.0 : -kInf;
            }
        } else {
            for (std::size_t k = 0; k < n; ++k) {
                lw[k] = weight_log(family_, coord, s_[k]);
            }
        }
        double top = -kInf;
        for (double v : lw) {
            top = std::max(top, v);
        }
        if (top == kInf) {
            // zero atoms under a negative size-biased exponent carry all the mass
            for (double& v : lw) {
                v = v == kInf ? 0.0 : -kInf;
            }
            top = 0.0;
        }
        if (!std::isfinite(top)) {
            throw DomainError("weighted allocation: zero weight mass at theta = " + number(coord));
        }
        double mass = 0.0;
        double sacc = 0.0;
        std::vector<double> acc(n_, 0.0);
        for (std::size_t k = 0; k < n; ++k) {
            if (lw[k] == -kInf) {
                continue;
            }
            const double w = p_[k] * std::exp(lw[k] - top);
            mass += w;
            sacc += w * s_[k];
            if (out) {
                const double* row = x_.data() + k * n_;
                for (std::size_t i = 0; i < n_; ++i) {
                    acc[i] += w * row[i];
                }
            }
        }
        if (!(mass > 0.0) || !std::isfinite(mass)) {
            throw DomainError("weighted allocation: weight mass is zero or not finite at theta = " + number(coord));
        }
        if (agg) {
            *agg = sacc / mass;
        }
        if (out) {
            for (std::size_t i = 0; i < n_; ++i) {
                out[i] = acc[i] / mass;
            }
        }
    }

    WeightedRisk family_;
    std::size_t n_;
    Parametrization param_;
    std::vector<double> s_, x_, p_;
    double s_min_ = 0.0;
    double s_max_ = 0.0;
};

class HolisticModel final : public CapitalModel {
public:
    HolisticModel(const Holistic& family, const ScenarioSet& scen)
        : agg_(family.aggregate, aggregate_distribution(scen)), n_(scen.units()) {
        weights_ = holistic_weights(family, n_);
        for (std::size_t i = 0; i < n_; ++i) {
            unit_.emplace_back(unit_family(family, i), unit_distribution(scen, i));
        }
    }

    std::size_t units() const override { return n_; }
    const Parametrization& parametrization() const override { return agg_.family().parametrization(); }
    double aggregate(double coord) const override {
        double rho = 0.0;
        double gap = 0.0;
        parts(coord, nullptr, rho, gap);
        return rho + weights_.beta * gap;
    }
    void allocate(double coord, std::span<double> out) const override {
        double rho = 0.0;
        double gap = 0.0;
        parts(coord, out.data(), rho, gap);
        for (std::size_t i = 0; i < n_; ++i) {
            out[i] -= weights_.betas[i] * gap;
        }
    }
    bool cheap() const override {
        if (agg_.family().kind() != DistortionKind::var_indicator) {
            return false;
        }
        return std::all_of(unit_.begin(), unit_.end(),
                           [](const StieltjesKernel& k) { return k.family().kind() == DistortionKind::var_indicator; });
    }
    std::string describe() const override { return "holistic/" + agg_.family().name(); }

private:
    void parts(double coord, double* rho_units, double& rho, double& gap) const {
        rho = agg_.risk_measure(coord);
        double total = 0.0;
        const Parametrization& p = agg_.family().parametrization();
        for (std::size_t i = 0; i < n_; ++i) {
            const double c = convert_coord(p, unit_[i].family().parametrization(), coord);
            const double r = unit_[i].risk_measure(c);
            if (rho_units) {
                rho_units[i] = r;
            }
            total += r;
        }
        gap = total - rho;
    }

    StieltjesKernel agg_;
    std::vector<StieltjesKernel> unit_;
    std::size_t n_;
    HolisticWeights weights_;
};

BinnedConditionalMean default_conditional_mean(const ScenarioSet& scen, const BindOptions& options) {
    if (options.conditional_mean) {
        return *options.conditional_mean;
    }
    if (scen.weighted() && options.exact_conditional_mean) {
        return conditional_mean_by_value(scen);
    }
    const std::size_t per = std::max<std::size_t>(1, options.min_per_bin);
    std::size_t bins = options.bins;
    if (scen.size() < per * bins) {
        bins = scen.size() / per;
    }
    if (bins < 2) {
        return conditional_mean_by_value(scen);
    }
    return conditional_mean_given_sum(scen, bins, per);
}

double log_interp(const CustomWeightTable& t, double theta, double s) {
    const std::size_t ns = t.s.size();
    auto bracket = [](const std::vector<double>& g, double x, std::size_t& j, double& w) {
        if (x <= g.front()) {
            j = 0;
            w = 0.0;
            return;
        }
        if (x >= g.back()) {
            j = g.size() - 2;
            w = 1.0;
            return;
        }
        j = static_cast<std::size_t>(std::upper_bound(g.begin(), g.end(), x) - g.begin()) - 1;
        j = std::min(j, g.size() - 2);
        w = (x - g[j]) / (g[j + 1] - g[j]);
    };
    std::size_t a = 0;
    std::size_t b = 0;
    double wa = 0.0;
    double wb = 0.0;
    bracket(t.theta, theta, a, wa);
    bracket(t.s, s, b, wb);
    auto lv = [&](std::size_t r, std::size_t c) { return std::log(t.values[r * ns + c]); };
    const double lo = (1.0 - wb) * lv(a, b) + wb * lv(a, b + 1);
    const double hi = (1.0 - wb) * lv(a + 1, b) + wb * lv(a + 1, b + 1);
    return (1.0 - wa) * lo + wa * hi;
}

void validate_custom_table(const CustomWeightTable& t) {
    if (t.theta.size() < 2 || t.s.size() < 2) {
        throw ConfigError("custom weight table needs at least two theta and two s values");
    }
    if (t.values.size() != t.theta.size() * t.s.size()) {
        throw ConfigError("custom weight table has the wrong number of values");
    }
    for (std::size_t j = 1; j < t.theta.size(); ++j) {
        if (!(t.theta[j] > t.theta[j - 1])) {
            throw ConfigError("custom weight table theta grid must be strictly increasing");
        }
    }
    for (std::size_t j = 1; j < t.s.size(); ++j) {
        if (!(t.s[j] > t.s[j - 1])) {
            throw ConfigError("custom weight table s grid must be strictly increasing");
        }
    }
    for (double v : t.values) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw ConfigError("custom weight table values must be positive and finite");
        }
    }
}

} // namespace

// ---------------------------------------------------------------------------

WeightPreference table_weight_preference(std::vector<double> x, std::vector<double> h) {
    if (x.empty() || x.size() != h.size()) {
        throw ConfigError("weight preference table needs matching non-empty x and h columns");
    }
    for (std::size_t j = 1; j < x.size(); ++j) {
        if (!(x[j] > x[j - 1])) {
            throw ConfigError("weight preference table x must be strictly increasing");
        }
    }
    for (double v : h) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw ConfigError("weight preference values must be finite and non-negative");
        }
    }
    WeightPreference wp;
    wp.table_x = x;
    wp.table_h = h;
    wp.h = [x = std::move(x), h = std::move(h)](double v) {
        if (v <= x.front()) {
            return h.front();
        }
        if (v >= x.back()) {
            return h.back();
        }
        const std::size_t j = static_cast<std::size_t>(std::upper_bound(x.begin(), x.end(), v) - x.begin()) - 1;
        const double w = (v - x[j]) / (x[j + 1] - x[j]);
        return (1.0 - w) * h[j] + w * h[j + 1];
    };
    return wp;
}

std::string family_name(const AllocationFamily& family) {
    struct Visitor {
        std::string operator()(const OptSquared&) const { return "opt_squared"; }
        std::string operator()(const OptAbsolute&) const { return "opt_absolute"; }
        std::string operator()(const EulerDistortion& e) const { return "euler_" + e.family.name(); }
        std::string operator()(const WeightedRisk& w) const {
            switch (w.kind) {
            case WeightKind::size_biased:
                return "size_biased";
            case WeightKind::esscher:
                return "esscher";
            case WeightKind::custom:
                return "custom_weight";
            }
            return "weighted";
        }
        std::string operator()(const Holistic&) const { return "holistic"; }
    };
    return std::visit(Visitor{}, family);
}

bool is_top_down(const AllocationFamily& family) {
    return std::holds_alternative<OptSquared>(family) || std::holds_alternative<OptAbsolute>(family);
}

void validate(const AllocationFamily& family, std::size_t n) {
    if (n == 0) {
        throw ConfigError("allocation needs at least one unit");
    }
    if (const auto* sq = std::get_if<OptSquared>(&family)) {
        expand_prefs(sq->prefs, n);
        if (sq->beta_table) {
            const BetaTable& t = *sq->beta_table;
            if (t.theta.empty() || t.theta.size() != t.betas.size()) {
                throw ConfigError("beta table needs one row of betas per theta value");
            }
            for (std::size_t j = 1; j < t.theta.size(); ++j) {
                if (!(t.theta[j] > t.theta[j - 1])) {
                    throw ConfigError("beta table theta values must be strictly increasing");
                }
            }
            for (const auto& row : t.betas) {
                check_betas(row, n, "beta table");
            }
        } else {
            check_betas(sq->betas, n, "opt_squared");
        }
    } else if (const auto* ab = std::get_if<OptAbsolute>(&family)) {
        for (const auto& p : expand_prefs(ab->prefs, n)) {
            if (std::holds_alternative<TailPreference>(p)) {
                throw ConfigError("the absolute-penalty rule supports physical and weight-function preferences only");
            }
        }
    } else if (const auto* w = std::get_if<WeightedRisk>(&family)) {
        if (w->kind == WeightKind::custom) {
            if (!w->table) {
                throw ConfigError("custom weighted allocation needs a weight table");
            }
            validate_custom_table(*w->table);
        }
    } else if (const auto* h = std::get_if<Holistic>(&family)) {
        if (!(h->gamma > 0.0) || !std::isfinite(h->gamma)) {
            throw ConfigError("holistic gamma must be positive");
        }
        if (h->gammas.size() != n) {
            throw ConfigError("holistic rule needs one gamma per unit");
        }
        for (double g : h->gammas) {
            if (!(g > 0.0) || !std::isfinite(g)) {
                throw ConfigError("holistic unit gammas must be positive");
            }
        }
        if (h->units.size() > 1 && h->units.size() != n) {
            throw ConfigError("holistic rule needs zero, one or n unit distortion families");
        }
    }
}

Allocation CapitalModel::allocate_theta(double theta) const {
    const double coord = checked_coord(parametrization(), theta);
    Allocation a;
    a.k.resize(units());
    allocate(coord, a.k);
    a.aggregate = aggregate(coord);
    return a;
}

AggregateCapital distortion_aggregate(const DistortionFamily& family, const ScenarioSet& scen) {
    auto kernel = std::make_shared<const StieltjesKernel>(family, aggregate_distribution(scen));
    AggregateCapital agg;
    agg.param = family.parametrization();
    agg.k_coord = [kernel](double coord) { return kernel->risk_measure(coord); };
    agg.name = family.name();
    agg.cheap = family.kind() == DistortionKind::var_indicator;
    return agg;
}

std::shared_ptr<const CapitalModel> bind(const AllocationFamily& family, const ScenarioSet& scen,
                                         const std::optional<AggregateCapital>& exogenous,
                                         const BindOptions& options) {
    if (scen.size() == 0) {
        throw std::invalid_argument("bind: empty scenario set");
    }
    validate(family, scen.units());
    if (is_top_down(family)) {
        if (!exogenous || !exogenous->k_coord) {
            throw ConfigError(family_name(family) + " needs an exogenous aggregate capital");
        }
    } else if (exogenous) {
        throw ConfigError(family_name(family) + " determines its own aggregate capital");
    }
    if (const auto* sq = std::get_if<OptSquared>(&family)) {
        return std::make_shared<OptSquaredModel>(*sq, scen, *exogenous);
    }
    if (const auto* ab = std::get_if<OptAbsolute>(&family)) {
        return std::make_shared<OptAbsoluteModel>(*ab, scen, *exogenous);
    }
    if (const auto* eu = std::get_if<EulerDistortion>(&family)) {
        return std::make_shared<EulerModel>(*eu, scen, default_conditional_mean(scen, options));
    }
    if (const auto* w = std::get_if<WeightedRisk>(&family)) {
        return std::make_shared<WeightedModel>(*w, scen, options.weight_axis_scale);
    }
    return std::make_shared<HolisticModel>(std::get<Holistic>(family), scen);
}

double preference_mean(const PreferenceSpec& pref, const ScenarioSet& scen, std::size_t i, double theta) {
    if (std::holds_alternative<PhysicalPreference>(pref)) {
        double m = 0.0;
        for (std::size_t k = 0; k < scen.size(); ++k) {
            m += scen.probability(k) * scen.loss(k, i);
        }
        return m;
    }
    if (const auto* tp = std::get_if<TailPreference>(&pref)) {
        return tail_preference_mean(scen, i, tp->level ? *tp->level : theta);
    }
    return weighted_mean_of(preference_weights(pref, scen, i, theta), scen, i);
}

double tail_preference_mean(const ScenarioSet& scen, std::size_t i, double level) {
    if (!(level >= 0.0 && level <= 1.0)) {
        throw DomainError("tail preference level " + number(level) + " lies outside [0,1]");
    }
    return unit_distribution(scen, i).tail_mean(level);
}

std::vector<double> betas_at(const OptSquared& family, double theta, std::size_t n) {
    if (!family.beta_table) {
        if (family.betas.size() != n) {
            throw ConfigError("opt_squared: expected " + std::to_string(n) + " betas");
        }
        return family.betas;
    }
    const BetaTable& t = *family.beta_table;
    if (theta <= t.theta.front()) {
        return t.betas.front();
    }
    if (theta >= t.theta.back()) {
        return t.betas.back();
    }
    const std::size_t j =
        static_cast<std::size_t>(std::upper_bound(t.theta.begin(), t.theta.end(), theta) - t.theta.begin()) - 1;
    const double w = (theta - t.theta[j]) / (t.theta[j + 1] - t.theta[j]);
    std::vector<double> b(n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        b[i] = (1.0 - w) * t.betas[j][i] + w * t.betas[j + 1][i];
        sum += b[i];
    }
    // both rows sum to one; remove the rounding left by the interpolation
    b[n - 1] += 1.0 - sum;
    return b;
}

std::vector<double> opt_squared_allocate(const OptSquared& family, double theta, double aggregate,
                                         const ScenarioSet& scen) {
    const std::size_t n = scen.units();
    validate(family, n);
    if (!std::isfinite(aggregate)) {
        throw DomainError("opt_squared: aggregate capital must be finite");
    }
    const auto prefs = expand_prefs(family.prefs, n);
    const std::vector<double> beta = betas_at(family, theta, n);
    std::vector<double> k(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        k[i] = preference_mean(prefs[i], scen, i, theta);
        total += k[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
        k[i] += beta[i] * (aggregate - total);
    }
    return k;
}

std::vector<QuantileSource> preference_marginals(const OptAbsolute& family, const ScenarioSet& scen) {
    const std::size_t n = scen.units();
    validate(family, n);
    const auto prefs = expand_prefs(family.prefs, n);
    std::vector<QuantileSource> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (std::holds_alternative<PhysicalPreference>(prefs[i])) {
            out.emplace_back(EmpiricalDistribution(scen.column(i), scenario_probs(scen)));
            continue;
        }
        const std::vector<double> w = preference_weights(prefs[i], scen, i, 0.0);
        std::vector<double> vals;
        std::vector<double> ws;
        for (std::size_t k = 0; k < scen.size(); ++k) {
            if (w[k] > 0.0) {
                vals.push_back(scen.loss(k, i));
                ws.push_back(w[k]);
            }
        }
        out.emplace_back(EmpiricalDistribution(std::move(vals), std::move(ws)));
    }
    return out;
}

std::vector<double> opt_absolute_allocate(double s, std::span<const QuantileSource> marginals) {
    if (marginals.empty()) {
        throw std::invalid_argument("opt_absolute_allocate: no marginals");
    }
    auto q = [&](double u) { return comonotonic_sum_quantile(marginals, u); };
    double lower = 0.0;
    for (const auto& m : marginals) {
        lower += source_quantile(m, 0.0, QuantileSide::right);
    }
    const double upper = q(1.0);
    const AlphaMixedRoot r = alpha_mixed_inverse_root(q, s, lower, upper);
    const std::size_t n = marginals.size();
    std::vector<double> k(n);
    if (r.u_lo == r.u_hi) {
        for (std::size_t i = 0; i < n; ++i) {
            k[i] = source_quantile(marginals[i], r.u_lo);
        }
        return k;
    }
    // mix the two bracket ends so the components add up to s
    const double left = r.left_value;
    const double right = r.right_value;
    double alpha = 1.0;
    if (right > left && std::isfinite(left) && std::isfinite(right)) {
        alpha = std::clamp((right - s) / (right - left), 0.0, 1.0);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double a = r.u_lo == 0.0 ? source_quantile(marginals[i], 0.0, QuantileSide::right)
                                       : source_quantile(marginals[i], r.u_lo);
        if (alpha == 1.0) {
            k[i] = a;
        } else {
            k[i] = alpha * a + (1.0 - alpha) * source_quantile(marginals[i], r.u_hi);
        }
    }
    return k;
}

std::vector<double> euler_distortion_allocate(const EulerDistortion& family, double theta, const ScenarioSet& scen,
                                              const BinnedConditionalMean& cond) {
    const EulerModel model(family, scen, cond);
    const double coord = checked_coord(model.parametrization(), theta);
    std::vector<double> k(scen.units());
    model.allocate(coord, k);
    return k;
}

Allocation weighted_allocate(const WeightedRisk& family, double theta, const ScenarioSet& scen) {
    validate(family, scen.units());
    const WeightedModel model(family, scen, 0.0);
    if (std::isnan(theta)) {
        throw DomainError("weighted allocation: parameter is NaN");
    }
    double coord = theta;
    if (family.kind == WeightKind::custom) {
        coord = checked_coord(model.parametrization(), theta);
    }
    Allocation a;
    a.k.resize(scen.units());
    model.allocate(coord, a.k);
    a.aggregate = model.aggregate(coord);
    return a;
}

HolisticWeights holistic_weights(const Holistic& family, std::size_t n) {
    validate(family, n);
    double denom = 1.0 / family.gamma;
    for (double g : family.gammas) {
        denom += 1.0 / g;
    }
    HolisticWeights w;
    w.beta = (1.0 / family.gamma) / denom;
    w.betas.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        w.betas[i] = (1.0 / family.gammas[i]) / denom;
    }
    return w;
}

Allocation holistic_allocate(const Holistic& family, double theta, const ScenarioSet& scen) {
    const HolisticModel model(family, scen);
    return model.allocate_theta(theta);
}

double weight_log(const WeightedRisk& family, double theta, double s) {
    switch (family.kind) {
    case WeightKind::size_biased:
        if (theta == 0.0) {
            return 0.0;
        }
        if (s < 0.0) {
            throw DomainError("size-biased weight at negative s = " + number(s));
        }
        if (s == 0.0) {
            return theta > 0.0 ? -kInf : kInf;
        }
        return theta * std::log(s);
    case WeightKind::esscher:
        return theta * s;
    case WeightKind::custom:
        if (!family.table) {
            throw ConfigError("custom weighted allocation needs a weight table");
        }
        return log_interp(*family.table, theta, s);
    }
    return 0.0;
}

MlrReport weighted_mlr_check(const WeightedRisk& family, std::span<const double> theta_grid,
                             std::span<const double> s_grid) {
    MlrReport rep;
    std::vector<double> th(theta_grid.begin(), theta_grid.end());
    std::vector<double> ss(s_grid.begin(), s_grid.end());
    std::sort(th.begin(), th.end());
    std::sort(ss.begin(), ss.end());
    // log w(theta2, s) - log w(theta1, s)
    auto log_ratio = [&](double t1, double t2, double s) {
        if (t1 == t2) {
            return 0.0;
        }
        switch (family.kind) {
        case WeightKind::size_biased:
            return s == 0.0 ? -kInf : (t2 - t1) * std::log(s);
        case WeightKind::esscher:
            return (t2 - t1) * s;
        case WeightKind::custom:
            return weight_log(family, t2, s) - weight_log(family, t1, s);
        }
        return 0.0;
    };
    for (std::size_t a = 0; a + 1 < th.size(); ++a) {
        for (std::size_t b = 0; b + 1 < ss.size(); ++b) {
            if (ss[b] == ss[b + 1] || th[a] == th[a + 1]) {
                continue;
            }
            const double hi = log_ratio(th[a], th[a + 1], ss[b + 1]);
            const double lo = log_ratio(th[a], th[a + 1], ss[b]);
            double minor = hi - lo;
            if (std::isnan(minor)) {
                minor = 0.0;
            }
            ++rep.checked;
            const double tol = 1e-12 * (1.0 + std::abs(hi) + std::abs(lo));
            rep.worst = std::min(rep.worst, minor);
            if (minor < -tol) {
                ++rep.violations;
                if (rep.messages.size() < 10) {
                    rep.messages.push_back("likelihood ratio decreases between s = " + number(ss[b]) + " and " +
                                           number(ss[b + 1]) + " for theta in [" + number(th[a]) + ", " +
                                           number(th[a + 1]) + "]");
                }
            }
        }
    }
    rep.pass = rep.violations == 0;
    return rep;
}

MlrReport weighted_mlr_check(const WeightedRisk& family) {
    if (family.kind == WeightKind::custom) {
        if (!family.table) {
            throw ConfigError("custom weighted allocation needs a weight table");
        }
        validate_custom_table(*family.table);
        return weighted_mlr_check(family, family.table->theta, family.table->s);
    }
    std::vector<double> th(41);
    std::vector<double> ss(101);
    for (std::size_t j = 0; j < th.size(); ++j) {
        th[j] = -4.0 + 8.0 * static_cast<double>(j) / 40.0;
    }
    for (std::size_t j = 0; j < ss.size(); ++j) {
        const double x = static_cast<double>(j) / 100.0;
        ss[j] = family.kind == WeightKind::size_biased ? 50.0 * x * x : -20.0 + 40.0 * x;
    }
    return weighted_mlr_check(family, th, ss);
}

QuadraticWeights quadratic_weights(const AllocationFamily& family, double theta, const ScenarioSet& scen) {
    const std::size_t n = scen.units();
    const std::size_t N = scen.size();
    validate(family, n);
    QuadraticWeights out;
    if (const auto* sq = std::get_if<OptSquared>(&family)) {
        const auto prefs = expand_prefs(sq->prefs, n);
        const auto beta = betas_at(*sq, theta, n);
        for (std::size_t i = 0; i < n; ++i) {
            if (!(beta[i] > 0.0)) {
                throw DomainError("the squared-penalty objective needs positive betas");
            }
            std::vector<double> w = preference_weights(prefs[i], scen, i, theta);
            for (double& x : w) {
                x /= beta[i];
            }
            out.unit.push_back(std::move(w));
        }
        return out;
    }
    const auto* h = std::get_if<Holistic>(&family);
    if (!h) {
        throw ConfigError("quadratic objective is defined for the squared-penalty and holistic rules only");
    }
    // distortion weights u(x) of each positional atom, carried back to its scenario
    auto spread_back = [&](const DistortionFamily& fam, std::span<const double> values, double coord) {
        const auto order = order_by(values);
        std::vector<double> sorted(N);
        std::vector<double> probs;
        for (std::size_t j = 0; j < N; ++j) {
            sorted[j] = values[order[j]];
        }
        if (scen.weighted()) {
            probs.resize(N);
            for (std::size_t j = 0; j < N; ++j) {
                probs[j] = scen.probability(order[j]);
            }
        }
        const StieltjesKernel kernel(fam, EmpiricalDistribution(sorted, probs));
        std::vector<double> inc(N);
        kernel.increments(coord, inc);
        std::vector<double> w(N);
        for (std::size_t j = 0; j < N; ++j) {
            w[order[j]] = inc[j];
        }
        return w;
    };
    const Parametrization& p = h->aggregate.parametrization();
    const double coord = checked_coord(p, theta);
    for (std::size_t i = 0; i < n; ++i) {
        const DistortionFamily& fam = unit_family(*h, i);
        const std::vector<double> col = scen.column(i);
        std::vector<double> w = spread_back(fam, col, convert_coord(p, fam.parametrization(), coord));
        for (double& x : w) {
            x *= h->gammas[i];
        }
        out.unit.push_back(std::move(w));
    }
    out.aggregate = spread_back(h->aggregate, scen.aggregate(), coord);
    for (double& x : out.aggregate) {
        x *= h->gamma;
    }
    return out;
}

} // namespace riskshare
