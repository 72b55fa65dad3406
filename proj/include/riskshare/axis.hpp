#pragma once

#include <string>

namespace riskshare {

// Maps a unit grid variable t in [0,1] to a working coordinate and the working
// coordinate to the family parameter theta.
//
// Families whose natural parameter lives close to a boundary (Wang near 1,
// power near 0 or 1) are parametrised by an unbounded coordinate so the far
// tail of a sample stays reachable in double precision. Unbounded coordinates
// use c = scale * tan(pi (t - 1/2)), with t = 0 and t = 1 giving -inf and +inf.
class Parametrization {
public:
    enum class Kind { bounded, real_line, probit, logit };

    // theta = coordinate on [a, b]
    static Parametrization bounded(double a, double b);
    // theta = coordinate on the real line
    static Parametrization real_line(double scale);
    // theta = Phi(coordinate) in (0, 1)
    static Parametrization probit(double scale);
    // theta = 1 / (1 + exp(-coordinate)) in (0, 1)
    static Parametrization logit(double scale);

    Kind kind() const { return kind_; }
    double scale() const { return scale_; }
    Parametrization with_scale(double scale) const;

    double coord_at(double t) const;
    double t_at(double coord) const;
    double theta_of(double coord) const;
    double coord_of(double theta) const;

    // parameter interval I = [theta_lo, theta_hi]
    double theta_lo() const;
    double theta_hi() const;
    double coord_lo() const { return coord_at(0.0); }
    double coord_hi() const { return coord_at(1.0); }

    std::string describe() const;

private:
    Parametrization(Kind kind, double a, double b, double scale) : kind_(kind), a_(a), b_(b), scale_(scale) {}

    Kind kind_;
    double a_;
    double b_;
    double scale_;
};

} // namespace riskshare
