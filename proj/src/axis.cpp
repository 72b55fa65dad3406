#include <riskshare/axis.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <riskshare/special.hpp>

namespace riskshare {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

} // namespace

Parametrization Parametrization::bounded(double a, double b) {
    if (!(std::isfinite(a) && std::isfinite(b) && a < b)) {
        throw std::invalid_argument("bounded parametrization needs finite a < b");
    }
    return Parametrization(Kind::bounded, a, b, 1.0);
}

Parametrization Parametrization::real_line(double scale) {
    if (!(scale > 0.0 && std::isfinite(scale))) {
        throw std::invalid_argument("parametrization scale must be positive");
    }
    return Parametrization(Kind::real_line, -kInf, kInf, scale);
}

Parametrization Parametrization::probit(double scale) {
    Parametrization p = real_line(scale);
    p.kind_ = Kind::probit;
    return p;
}

Parametrization Parametrization::logit(double scale) {
    Parametrization p = real_line(scale);
    p.kind_ = Kind::logit;
    return p;
}

Parametrization Parametrization::with_scale(double scale) const {
    if (kind_ == Kind::bounded) {
        return *this;
    }
    Parametrization p = real_line(scale);
    p.kind_ = kind_;
    return p;
}

double Parametrization::coord_at(double t) const {
    if (kind_ == Kind::bounded) {
        if (t <= 0.0) {
            return a_;
        }
        if (t >= 1.0) {
            return b_;
        }
        return a_ + (b_ - a_) * t;
    }
    if (t <= 0.0) {
        return -kInf;
    }
    if (t >= 1.0) {
        return kInf;
    }
    return scale_ * std::tan(std::numbers::pi * (t - 0.5));
}

double Parametrization::t_at(double coord) const {
    if (kind_ == Kind::bounded) {
        if (coord <= a_) {
            return 0.0;
        }
        if (coord >= b_) {
            return 1.0;
        }
        return (coord - a_) / (b_ - a_);
    }
    if (coord == -kInf) {
        return 0.0;
    }
    if (coord == kInf) {
        return 1.0;
    }
    return 0.5 + std::atan(coord / scale_) / std::numbers::pi;
}

double Parametrization::theta_of(double coord) const {
    switch (kind_) {
    case Kind::bounded:
    case Kind::real_line:
        return coord;
    case Kind::probit:
        return normal_cdf(coord);
    case Kind::logit:
        if (coord == kInf) {
            return 1.0;
        }
        if (coord == -kInf) {
            return 0.0;
        }
        return 1.0 / (1.0 + std::exp(-coord));
    }
    return coord;
}

double Parametrization::coord_of(double theta) const {
    switch (kind_) {
    case Kind::bounded:
    case Kind::real_line:
        return theta;
    case Kind::probit:
        return normal_quantile(theta);
    case Kind::logit:
        if (theta <= 0.0) {
            return -kInf;
        }
        if (theta >= 1.0) {
            return kInf;
        }
        return std::log(theta) - std::log1p(-theta);
    }
    return theta;
}

double Parametrization::theta_lo() const {
    switch (kind_) {
    case Kind::bounded:
        return a_;
    case Kind::real_line:
        return -kInf;
    default:
        return 0.0;
    }
}

double Parametrization::theta_hi() const {
    switch (kind_) {
    case Kind::bounded:
        return b_;
    case Kind::real_line:
        return kInf;
    default:
        return 1.0;
    }
}

std::string Parametrization::describe() const {
    switch (kind_) {
    case Kind::bounded:
        return "bounded[" + std::to_string(a_) + "," + std::to_string(b_) + "]";
    case Kind::real_line:
        return "real_line(scale=" + std::to_string(scale_) + ")";
    case Kind::probit:
        return "probit(scale=" + std::to_string(scale_) + ")";
    case Kind::logit:
        return "logit(scale=" + std::to_string(scale_) + ")";
    }
    return "";
}

} // namespace riskshare
