#include <riskshare/sharing.hpp>

#include <algorithm>
#include <limits>
#include <memory>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <riskshare/errors.hpp>
#include <riskshare/kernels.hpp>
#include <riskshare/oracles.hpp>
#include <riskshare/rng.hpp>
#include <riskshare/special.hpp>

namespace riskshare {

namespace {

std::string number(double x) {
    std::ostringstream os;
    os.precision(12);
    os << x;
    return os.str();
}

void check_curve_matches(const CapitalModel& model, const CapitalCurve& curve) {
    const Parametrization& a = model.parametrization();
    const Parametrization& b = curve.parametrization();
    if (a.kind() != b.kind() || a.scale() != b.scale() || a.theta_lo() != b.theta_lo() ||
        a.theta_hi() != b.theta_hi()) {
        throw ConfigError("capital curve uses a different parametrization (" + b.describe() + ") than the rule (" +
                          a.describe() + ")");
    }
    const std::size_t g = curve.size();
    const double scale = 1.0 + std::max(std::abs(curve.k_min()), std::abs(curve.k_max()));
    for (std::size_t j : {std::size_t{0}, g / 4, g / 2, (3 * g) / 4, g - 1}) {
        const double want = model.aggregate(curve.coord_grid()[j]);
        if (std::abs(want - curve.values()[j]) > 1e-9 * scale) {
            throw ConfigError("capital curve does not match the aggregate capital of the rule at theta = " +
                              number(b.theta_of(curve.coord_grid()[j])));
        }
    }
}

std::vector<std::size_t> order_by_s(std::span<const double> s) {
    std::vector<std::size_t> order(s.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });
    return order;
}

} // namespace

CapitalCurve model_curve(const CapitalModel& model, const CurveOptions& options) {
    auto eval = [&model, keep = model.weak_from_this().lock()](double coord) { return model.aggregate(coord); };
    CapitalCurve c = build_capital_curve(eval, model.parametrization(), options);
    c.set_cheap_evaluator(model.cheap());
    c.set_label(model.describe());
    return c;
}

CapitalCurve model_curve(const CapitalModel& model, const CurveOptions& options,
                         std::vector<double>& grid_allocations) {
    if (options.grid_size < 200) {
        throw std::invalid_argument("model_curve: grid needs at least 200 points");
    }
    const std::size_t g = options.grid_size;
    const std::size_t n = model.units();
    const Parametrization& param = model.parametrization();
    auto coords = std::make_shared<std::vector<double>>(g);
    auto kvals = std::make_shared<std::vector<double>>(g);
    for (std::size_t j = 0; j < g; ++j) {
        (*coords)[j] = param.coord_at(static_cast<double>(j) / static_cast<double>(g - 1));
    }
    grid_allocations.assign(g * n, 0.0);
    guarded_parallel_for(
        g,
        [&](std::size_t j) {
            (*kvals)[j] =
                model.allocate_with_aggregate((*coords)[j], std::span<double>(grid_allocations.data() + j * n, n));
        },
        options.exec);
    // grid points are served from the table, anything else goes back to the rule
    // a model owned by a shared_ptr stays alive as long as the curve
    auto lookup = [&model, keep = model.weak_from_this().lock(), coords, kvals](double coord) {
        const auto it = std::lower_bound(coords->begin(), coords->end(), coord);
        if (it != coords->end() && *it == coord) {
            return (*kvals)[static_cast<std::size_t>(it - coords->begin())];
        }
        return model.aggregate(coord);
    };
    CapitalCurve c = build_capital_curve(lookup, param, options);
    c.set_cheap_evaluator(model.cheap());
    c.set_label(model.describe());
    return c;
}

void SharingResult::finish_errors() {
    max_abs_err_ = 0.0;
    max_rel_err_ = 0.0;
    for (std::size_t k = 0; k < s_.size(); ++k) {
        double sum = 0.0;
        for (std::size_t i = 0; i < units_; ++i) {
            sum += h_[k * units_ + i];
        }
        const double e = std::abs(sum - s_[k]);
        max_abs_err_ = std::max(max_abs_err_, e);
        max_rel_err_ = std::max(max_rel_err_, e / (1.0 + std::abs(s_[k])));
    }
}

void SharingResult::set_share(std::size_t k, std::size_t i, double value) {
    h_.at(k * units_ + i) = value;
    finish_errors();
}

void SharingResult::write_csv(std::ostream& os, const std::string& comment) const {
    if (!comment.empty()) {
        os << "# " << comment << '\n';
    }
    os << "scenario,s,theta";
    for (std::size_t i = 0; i < units_; ++i) {
        os << ",h_" << (i + 1);
    }
    os << '\n';
    os.precision(17);
    for (std::size_t k = 0; k < s_.size(); ++k) {
        os << k << ',' << s_[k] << ',' << theta_[k];
        for (std::size_t i = 0; i < units_; ++i) {
            os << ',' << h_[k * units_ + i];
        }
        os << '\n';
    }
}

SharingResult induce_sharing(const CapitalModel& model, const CapitalCurve& curve, const ScenarioSet& scen,
                             const SharingOptions& options) {
    if (scen.units() != model.units()) {
        throw std::invalid_argument("induce_sharing: scenario set and rule differ in the number of units");
    }
    if (scen.size() == 0) {
        throw std::invalid_argument("induce_sharing: empty scenario set");
    }
    check_curve_matches(model, curve);
    if (options.policy == InversePolicy::cdf_matched && !curve.has_cdf()) {
        throw ConfigError("the cdf inverse policy is only available for the VaR family");
    }

    const std::size_t N = scen.size();
    const std::size_t n = model.units();
    SharingResult r;
    r.units_ = n;
    r.s_.assign(scen.aggregate().begin(), scen.aggregate().end());
    r.theta_.resize(N);
    r.coord_.resize(N);
    r.h_.resize(N * n);
    r.curve_fp_ = curve.fingerprint();
    r.policy_ = options.policy;

    SharingPath path = options.path;
    if (path == SharingPath::automatic) {
        const bool cheap_inverse = options.policy == InversePolicy::cdf_matched || curve.cheap_evaluator();
        path = (N <= options.exact_limit || (model.cheap() && cheap_inverse)) ? SharingPath::exact
                                                                               : SharingPath::tabulated;
    }
    r.path_ = path;
    r.descriptor_ = model.describe() + " policy=" + to_string(options.policy) +
                    (path == SharingPath::exact ? " path=exact" : " path=tabulated");

    if (path == SharingPath::exact) {
        guarded_parallel_for(
            N,
            [&](std::size_t k) {
                ParameterPoint p;
                try {
                    p = right_inverse_point(curve, r.s_[k], options.policy, options.tol);
                } catch (const SurjectivityError& e) {
                    throw SurjectivityError("scenario " + std::to_string(k) + ": " + e.what());
                }
                r.theta_[k] = p.theta;
                r.coord_[k] = p.coord;
                try {
                    model.allocate_given(p.coord, r.s_[k], std::span<double>(r.h_.data() + k * n, n));
                } catch (const DomainError& e) {
                    throw DomainError("allocation failed at scenario " + std::to_string(k) + ": " + e.what());
                }
            },
            options.exec);
        r.finish_errors();
        return r;
    }

    // allocation table on the curve grid
    const std::size_t g = curve.size();
    const auto coords = curve.coord_grid();
    const auto kvals = curve.values();
    CapitalCurve grid_curve = curve;
    grid_curve.drop_evaluator();
    if (model.cheap_given()) {
        // only the inversion is expensive: invert on the grid, then allocate the loss itself
        guarded_parallel_for(
            N,
            [&](std::size_t k) {
                ParameterPoint p;
                try {
                    p = right_inverse_point(grid_curve, r.s_[k], options.policy, options.tol);
                } catch (const SurjectivityError& e) {
                    throw SurjectivityError("scenario " + std::to_string(k) + ": " + e.what());
                }
                r.theta_[k] = p.theta;
                r.coord_[k] = p.coord;
                model.allocate_given(p.coord, r.s_[k], std::span<double>(r.h_.data() + k * n, n));
            },
            options.exec);
        r.finish_errors();
        return r;
    }
    std::vector<double> computed;
    std::span<const double> table = options.grid_allocations;
    if (table.empty()) {
        computed.resize(g * n);
        guarded_parallel_for(
            g,
            [&](std::size_t j) {
                model.allocate_given(coords[j], kvals[j], std::span<double>(computed.data() + j * n, n));
            },
            options.exec);
        table = computed;
    } else if (table.size() != g * n) {
        throw std::invalid_argument("induce_sharing: allocation table does not match the curve grid");
    }
    const auto tg = curve.t_grid();
    guarded_parallel_for(
        N,
        [&](std::size_t k) {
            ParameterPoint p;
            try {
                p = right_inverse_point(grid_curve, r.s_[k], options.policy, options.tol);
            } catch (const SurjectivityError& e) {
                throw SurjectivityError("scenario " + std::to_string(k) + ": " + e.what());
            }
            r.theta_[k] = p.theta;
            r.coord_[k] = p.coord;
            std::size_t j = static_cast<std::size_t>(std::upper_bound(tg.begin(), tg.end(), p.t) - tg.begin());
            j = std::clamp<std::size_t>(j, 1, g - 1) - 1;
            const double w = std::clamp((p.t - tg[j]) / (tg[j + 1] - tg[j]), 0.0, 1.0);
            double* out = r.h_.data() + k * n;
            for (std::size_t i = 0; i < n; ++i) {
                out[i] = (1.0 - w) * table[j * n + i] + w * table[(j + 1) * n + i];
            }
        },
        options.exec);
    r.finish_errors();
    return r;
}

void BinnedShares::write_csv(std::ostream& os, const std::string& comment) const {
    if (!comment.empty()) {
        os << "# " << comment << '\n';
    }
    os << "s_mean,theta_mean";
    for (std::size_t i = 0; i < units; ++i) {
        os << ",h" << (i + 1) << "_mean";
    }
    os << ",count\n";
    os.precision(17);
    for (std::size_t b = 0; b < bins(); ++b) {
        os << s_mean[b] << ',' << theta_mean[b];
        for (std::size_t i = 0; i < units; ++i) {
            os << ',' << h(b, i);
        }
        os << ',' << count[b] << '\n';
    }
}

BinnedShares binned_shares(const SharingResult& result, std::size_t bins) {
    const std::size_t N = result.size();
    if (bins == 0 || N < bins) {
        throw std::invalid_argument("binned_shares: need at least one scenario per bin");
    }
    const std::size_t n = result.units();
    const auto order = order_by_s(result.s_values());
    BinnedShares out;
    out.units = n;
    out.s_mean.assign(bins, 0.0);
    out.theta_mean.assign(bins, 0.0);
    out.h_mean.assign(bins * n, 0.0);
    out.count.assign(bins, 0);
    for (std::size_t b = 0; b < bins; ++b) {
        const std::size_t lo = b * N / bins;
        const std::size_t hi = (b + 1) * N / bins;
        for (std::size_t j = lo; j < hi; ++j) {
            const std::size_t k = order[j];
            out.s_mean[b] += result.s(k);
            out.theta_mean[b] += result.theta(k);
            for (std::size_t i = 0; i < n; ++i) {
                out.h_mean[b * n + i] += result.h(k, i);
            }
        }
        const double c = static_cast<double>(hi - lo);
        out.count[b] = hi - lo;
        out.s_mean[b] /= c;
        out.theta_mean[b] /= c;
        for (std::size_t i = 0; i < n; ++i) {
            out.h_mean[b * n + i] /= c;
        }
    }
    return out;
}

ComonotonicityReport comonotonicity_diagnostic(const SharingResult& result, std::size_t bins, double threshold) {
    if (result.size() < 100) {
        throw std::invalid_argument("comonotonicity_diagnostic: needs at least 100 scenarios");
    }
    bins = std::min(bins, result.size());
    const BinnedShares bs = binned_shares(result, bins);
    const std::size_t n = result.units();
    ComonotonicityReport rep;
    rep.bins = bins;
    rep.decrease_fraction.assign(n, 0.0);
    rep.top_decile_slope.assign(n, 0.0);
    rep.top_decile_decreasing.assign(n, false);
    rep.comonotonic = true;
    const std::size_t top = std::max<std::size_t>(2, bins / 10);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t dec = 0;
        for (std::size_t b = 0; b + 1 < bins; ++b) {
            const double a = bs.h(b, i);
            if (bs.h(b + 1, i) < a - 1e-12 * (1.0 + std::abs(a))) {
                ++dec;
            }
        }
        rep.decrease_fraction[i] = static_cast<double>(dec) / static_cast<double>(bins - 1);
        if (rep.decrease_fraction[i] > threshold) {
            rep.comonotonic = false;
        }
        double sm = 0.0;
        double hm = 0.0;
        for (std::size_t b = bins - top; b < bins; ++b) {
            sm += bs.s_mean[b];
            hm += bs.h(b, i);
        }
        sm /= static_cast<double>(top);
        hm /= static_cast<double>(top);
        double sxy = 0.0;
        double sxx = 0.0;
        for (std::size_t b = bins - top; b < bins; ++b) {
            sxy += (bs.s_mean[b] - sm) * (bs.h(b, i) - hm);
            sxx += (bs.s_mean[b] - sm) * (bs.s_mean[b] - sm);
        }
        rep.top_decile_slope[i] = sxx > 0.0 ? sxy / sxx : 0.0;
        rep.top_decile_decreasing[i] = rep.top_decile_slope[i] < 0.0 && bs.h(bins - 1, i) < bs.h(bins - top, i);
    }
    return rep;
}

ParetoReport scenario_pareto_check(const AllocationFamily& family, const SharingResult& result,
                                   const ScenarioSet& scen, std::size_t n_perturbations, std::uint64_t seed) {
    if (!std::holds_alternative<OptSquared>(family) && !std::holds_alternative<Holistic>(family)) {
        throw ConfigError("scenario_pareto_check applies to the squared-penalty and holistic rules");
    }
    if (scen.size() > 100) {
        throw std::invalid_argument("scenario_pareto_check: at most 100 atoms");
    }
    if (result.size() != scen.size() || result.units() != scen.units()) {
        throw std::invalid_argument("scenario_pareto_check: result does not match the scenarios");
    }
    const std::size_t N = scen.size();
    const std::size_t n = scen.units();
    const CounterRng rng(seed);
    ParetoReport rep;
    rep.pass = true;
    for (std::size_t k = 0; k < N; ++k) {
        const QuadraticWeights qw = quadratic_weights(family, result.theta(k), scen);
        QuadraticProblem prob;
        prob.unit_weights = qw.unit;
        prob.unit_values.resize(n);
        double scale = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            prob.unit_values[i] = scen.column(i);
            for (double v : prob.unit_values[i]) {
                scale = std::max(scale, std::abs(v));
            }
        }
        prob.aggregate_weights = qw.aggregate;
        if (!qw.aggregate.empty()) {
            prob.aggregate_values.assign(scen.aggregate().begin(), scen.aggregate().end());
        }
        prob.sum_constraint = scen.aggregate()[k];
        const QuadraticSolution sol = brute_force_constrained_quadratic(prob);

        ParetoAtom atom;
        atom.scenario = k;
        std::vector<double> hk(result.row(k).begin(), result.row(k).end());
        for (std::size_t i = 0; i < n; ++i) {
            atom.max_deviation = std::max(atom.max_deviation, std::abs(hk[i] - sol.k[i]));
        }
        const double base = quadratic_objective(prob, hk);
        const double eps = 1e-3 * scale;
        atom.min_objective_gain = std::numeric_limits<double>::infinity();
        std::vector<double> trial(n);
        std::vector<double> delta(n);
        for (std::size_t p = 0; p < n_perturbations; ++p) {
            double mean = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                delta[i] = normal_quantile(rng.uniform(k, p * n + i));
                mean += delta[i];
            }
            mean /= static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
                trial[i] = hk[i] + eps * (delta[i] - mean);
            }
            atom.min_objective_gain = std::min(atom.min_objective_gain, quadratic_objective(prob, trial) - base);
        }
        if (n_perturbations == 0 || n < 2) {
            atom.min_objective_gain = 0.0;
        }
        double sum = 0.0;
        for (double v : hk) {
            sum += v;
        }
        const bool sums = std::abs(sum - scen.aggregate()[k]) <= 1e-9 * scale;
        const bool perturb_ok = n < 2 || n_perturbations == 0 || atom.min_objective_gain > 0.0;
        atom.pass = sums && atom.max_deviation <= 1e-8 * scale && perturb_ok;
        rep.pass = rep.pass && atom.pass;
        rep.atoms.push_back(atom);
    }
    return rep;
}

} // namespace riskshare
