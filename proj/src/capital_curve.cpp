#include <riskshare/capital_curve.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <ostream>
#include <sstream>

#include <riskshare/errors.hpp>
#include <riskshare/kernels.hpp>

namespace riskshare {

namespace {

std::string number(double x) {
    std::ostringstream os;
    os.precision(12);
    os << x;
    return os.str();
}

} // namespace

std::string to_string(InversePolicy policy) {
    switch (policy) {
    case InversePolicy::infimum_preimage:
        return "inf";
    case InversePolicy::supremum_preimage:
        return "sup";
    case InversePolicy::cdf_matched:
        return "cdf";
    }
    return "";
}

InversePolicy policy_from_string(const std::string& text) {
    if (text == "inf" || text == "infimum" || text == "infimum_preimage") {
        return InversePolicy::infimum_preimage;
    }
    if (text == "sup" || text == "supremum" || text == "supremum_preimage") {
        return InversePolicy::supremum_preimage;
    }
    if (text == "cdf" || text == "cdf_matched") {
        return InversePolicy::cdf_matched;
    }
    throw ConfigError("unknown inverse policy '" + text + "' (expected inf, sup or cdf)");
}

std::vector<double> CapitalCurve::theta_grid() const {
    std::vector<double> out(coord_.size());
    for (std::size_t j = 0; j < coord_.size(); ++j) {
        out[j] = param_.theta_of(coord_[j]);
    }
    return out;
}

double CapitalCurve::evaluate_t(double t) const {
    t = std::clamp(t, 0.0, 1.0);
    if (eval_) {
        return eval_(param_.coord_at(t));
    }
    const std::size_t g = t_.size();
    const double x = t * static_cast<double>(g - 1);
    std::size_t j = static_cast<std::size_t>(std::floor(x));
    if (j >= g - 1) {
        return k_.back();
    }
    const double w = x - static_cast<double>(j);
    if (w == 0.0) {
        return k_[j];
    }
    return (1.0 - w) * k_[j] + w * k_[j + 1];
}

double CapitalCurve::evaluate_coord(double coord) const {
    if (eval_) {
        return eval_(coord);
    }
    return evaluate_t(param_.t_at(coord));
}

std::uint64_t CapitalCurve::fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (double v : k_) {
        unsigned char bytes[sizeof(double)];
        std::memcpy(bytes, &v, sizeof(double));
        for (unsigned char b : bytes) {
            h ^= b;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

void CapitalCurve::write_csv(std::ostream& os, const std::string& comment) const {
    if (!comment.empty()) {
        os << "# " << comment << '\n';
    }
    os << "theta,K\n";
    os.precision(17);
    for (std::size_t j = 0; j < k_.size(); ++j) {
        os << param_.theta_of(coord_[j]) << ',' << k_[j] << '\n';
    }
}

CapitalCurve build_capital_curve(std::function<double(double)> k_eval_coord, Parametrization param,
                                 const CurveOptions& options) {
    if (!k_eval_coord) {
        throw std::invalid_argument("build_capital_curve: missing evaluator");
    }
    if (options.grid_size < 200) {
        throw std::invalid_argument("build_capital_curve: grid needs at least 200 points");
    }
    CapitalCurve c;
    c.param_ = param;
    const std::size_t g = options.grid_size;
    c.t_.resize(g);
    c.coord_.resize(g);
    c.k_.resize(g);
    for (std::size_t j = 0; j < g; ++j) {
        c.t_[j] = static_cast<double>(j) / static_cast<double>(g - 1);
        c.coord_[j] = param.coord_at(c.t_[j]);
    }
    guarded_parallel_for(
        g,
        [&](std::size_t j) {
            const double v = k_eval_coord(c.coord_[j]);
            if (!std::isfinite(v)) {
                throw DomainError("capital curve evaluator returned a non-finite value at theta=" +
                                  number(param.theta_of(c.coord_[j])));
            }
            c.k_[j] = v;
        },
        options.exec);

    c.k_min_ = *std::min_element(c.k_.begin(), c.k_.end());
    c.k_max_ = *std::max_element(c.k_.begin(), c.k_.end());
    double scale = 0.0;
    for (double v : c.k_) {
        scale = std::max(scale, std::abs(v));
    }
    const double mono_tol = 1e-12 * std::max(scale, 1e-300);
    for (std::size_t j = 0; j + 1 < g; ++j) {
        const double d = c.k_[j + 1] - c.k_[j];
        if (d < -mono_tol) {
            c.monotone_ = false;
        }
        c.max_jump_ = std::max(c.max_jump_, std::abs(d));
    }
    const double range = c.k_max_ - c.k_min_;
    const double cont_tol = options.continuity_tol >= 0.0 ? options.continuity_tol : 0.01 * range;
    c.continuous_ = range == 0.0 || c.max_jump_ <= cont_tol;
    c.eval_ = std::move(k_eval_coord);
    return c;
}

CapitalCurve build_capital_curve(std::function<double(double)> k_eval_theta, double a, double b,
                                 std::size_t grid_size) {
    CurveOptions options;
    options.grid_size = grid_size;
    return build_capital_curve(std::move(k_eval_theta), Parametrization::bounded(a, b), options);
}

CapitalCurve distortion_curve(const DistortionFamily& family, const EmpiricalDistribution& dist,
                              const CurveOptions& options) {
    auto kernel = std::make_shared<const StieltjesKernel>(family, dist);
    CapitalCurve c = build_capital_curve([kernel](double coord) { return kernel->risk_measure(coord); },
                                         family.parametrization(), options);
    if (family.kind() == DistortionKind::var_indicator) {
        c.set_cdf([kernel](double s) { return kernel->dist().cdf(s); });
        c.set_cheap_evaluator(true);
    }
    c.set_label(family.name());
    return c;
}

ParameterPoint right_inverse_point(const CapitalCurve& curve, double s, InversePolicy policy,
                                   const InverseTolerance& tol) {
    if (!std::isfinite(s)) {
        throw std::invalid_argument("right_inverse: target must be finite");
    }
    if (!curve.monotone()) {
        throw DomainError("right_inverse: the capital curve is not monotone");
    }
    const Parametrization& param = curve.parametrization();
    const double scale = std::max({std::abs(curve.k_min()), std::abs(curve.k_max()), curve.k_max() - curve.k_min()});
    const double range_tol = scale > 0.0 ? tol.clamp_rel * scale : 1e-12;
    if (s < curve.k_min()) {
        if (curve.k_min() - s > range_tol) {
            throw SurjectivityError("value " + number(s) + " lies below the capital curve range [" +
                                    number(curve.k_min()) + ", " + number(curve.k_max()) + "]");
        }
        s = curve.k_min();
    } else if (s > curve.k_max()) {
        if (s - curve.k_max() > range_tol) {
            throw SurjectivityError("value " + number(s) + " lies above the capital curve range [" +
                                    number(curve.k_min()) + ", " + number(curve.k_max()) + "]");
        }
        s = curve.k_max();
    }
    const double tau = tol.abs_tol + tol.rel_tol * std::abs(s);

    auto finish = [&](double t) {
        ParameterPoint p;
        p.t = t;
        p.coord = param.coord_at(t);
        p.theta = param.theta_of(p.coord);
        const double k = curve.evaluate_t(t);
        if (std::abs(k - s) > tau) {
            throw SurjectivityError("no preimage for " + number(s) + ": the capital curve jumps from near " +
                                    number(k) + " at theta=" + number(p.theta));
        }
        return p;
    };

    if (policy == InversePolicy::cdf_matched) {
        if (!curve.has_cdf()) {
            throw std::invalid_argument("right_inverse: the cdf-matched policy needs the VaR family curve");
        }
        const double theta = curve.cdf(s);
        ParameterPoint p;
        p.coord = param.coord_of(theta);
        p.t = param.t_at(p.coord);
        p.theta = theta;
        const double k = curve.evaluate_coord(p.coord);
        if (std::abs(k - s) > tau) {
            throw SurjectivityError("no preimage for " + number(s) + " under the cdf-matched policy");
        }
        return p;
    }

    const auto t = curve.t_grid();
    const auto k = curve.values();
    const std::size_t g = t.size();
    const bool inf = policy == InversePolicy::infimum_preimage;
    // inf: smallest t with K(t) >= s - tau/2.  sup: largest t with K(t) <= s + tau/2.
    const double target = inf ? s - 0.5 * tau : s + 0.5 * tau;
    double lo;
    double hi;
    if (inf) {
        const std::size_t j = static_cast<std::size_t>(std::lower_bound(k.begin(), k.end(), target) - k.begin());
        if (j == 0) {
            return finish(0.0);
        }
        if (j >= g) {
            return finish(1.0);
        }
        lo = t[j - 1];
        hi = t[j];
    } else {
        const std::size_t j = static_cast<std::size_t>(std::upper_bound(k.begin(), k.end(), target) - k.begin());
        if (j >= g) {
            return finish(1.0);
        }
        if (j == 0) {
            return finish(0.0);
        }
        lo = t[j - 1];
        hi = t[j];
    }

    if (!curve.has_evaluator()) {
        // the grid interpolant is linear on the bracket
        const double k_lo = curve.evaluate_t(lo);
        const double k_hi = curve.evaluate_t(hi);
        double x = inf ? hi : lo;
        if (k_hi > k_lo) {
            x = lo + (hi - lo) * std::clamp((s - k_lo) / (k_hi - k_lo), 0.0, 1.0);
        }
        return finish(x);
    }

    // Illinois iteration on f(t) = K(t) - target with a bisection safeguard
    double f_lo = curve.evaluate_t(lo) - target;
    double f_hi = curve.evaluate_t(hi) - target;
    // the Illinois step rescales f_lo and f_hi, so the stopping test keeps the true values
    double k_lo = f_lo + target;
    double k_hi = f_hi + target;
    int side = 0;
    double last_width = hi - lo;
    int slow = 0;
    for (int it = 0; it < 200; ++it) {
        const double width = hi - lo;
        if (width <= 1e-15) {
            break;
        }
        // both ends inside the tolerance band: every point of the bracket is acceptable
        if (inf ? (k_hi <= s && k_lo >= s - tau) : (k_lo >= s && k_hi <= s + tau)) {
            break;
        }
        double m;
        if (slow >= 2 || f_hi == f_lo) {
            m = 0.5 * (lo + hi);
            slow = 0;
        } else {
            m = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        }
        if (!(m > lo && m < hi)) {
            m = 0.5 * (lo + hi);
        }
        const double fm = curve.evaluate_t(m) - target;
        const bool upper = inf ? fm >= 0.0 : fm > 0.0;
        if (upper) {
            hi = m;
            f_hi = fm;
            k_hi = fm + target;
            if (side == 1) {
                f_lo *= 0.5;
            }
            side = 1;
        } else {
            lo = m;
            f_lo = fm;
            k_lo = fm + target;
            if (side == -1) {
                f_hi *= 0.5;
            }
            side = -1;
        }
        if (hi - lo > 0.5 * last_width) {
            ++slow;
        } else {
            slow = 0;
            last_width = hi - lo;
        }
    }
    return finish(inf ? hi : lo);
}

double right_inverse(const CapitalCurve& curve, double s, InversePolicy policy, const InverseTolerance& tol) {
    return right_inverse_point(curve, s, policy, tol).theta;
}

std::vector<ParameterPoint> sample_parameter_points(const CapitalCurve& curve, std::span<const double> s,
                                                    InversePolicy policy, Exec exec, const InverseTolerance& tol) {
    std::vector<ParameterPoint> out(s.size());
    guarded_parallel_for(
        s.size(),
        [&](std::size_t k) {
            try {
                out[k] = right_inverse_point(curve, s[k], policy, tol);
            } catch (const SurjectivityError& e) {
                throw SurjectivityError("scenario " + std::to_string(k) + " (s=" + number(s[k]) + "): " + e.what());
            }
        },
        exec);
    return out;
}

std::vector<double> sample_parameter(const CapitalCurve& curve, const ScenarioSet& scen, InversePolicy policy,
                                     Exec exec) {
    const auto points = sample_parameter_points(curve, scen.aggregate(), policy, exec);
    std::vector<double> theta(points.size());
    for (std::size_t k = 0; k < points.size(); ++k) {
        theta[k] = points[k].theta;
    }
    return theta;
}

SurjectivityReport check_surjectivity(const CapitalCurve& curve, const EmpiricalDistribution& dist, double rel_tol) {
    SurjectivityReport r;
    r.sample_min = dist.min();
    r.sample_max = dist.max();
    r.k_min = curve.k_min();
    r.k_max = curve.k_max();
    const double scale = std::max({std::abs(r.k_min), std::abs(r.k_max), std::abs(r.sample_min),
                                   std::abs(r.sample_max)});
    const double tol = scale > 0.0 ? rel_tol * scale : 1e-12;
    r.range_covered = r.sample_min >= r.k_min - tol && r.sample_max <= r.k_max + tol;
    r.monotone_or_continuous = curve.monotone() || curve.continuous();
    return r;
}

} // namespace riskshare
