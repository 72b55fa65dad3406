#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <riskshare/axis.hpp>
#include <riskshare/distortion.hpp>
#include <riskshare/estimators.hpp>
#include <riskshare/execution.hpp>
#include <riskshare/scenario.hpp>

namespace riskshare {

enum class InversePolicy { infimum_preimage, supremum_preimage, cdf_matched };

std::string to_string(InversePolicy policy);
// accepts inf|sup|cdf and the long names
InversePolicy policy_from_string(const std::string& text);

struct CurveOptions {
    std::size_t grid_size = 2048;
    // negative means 1% of the curve range
    double continuity_tol = -1.0;
    Exec exec = Exec::parallel;
};

class CapitalCurve {
public:
    const Parametrization& parametrization() const { return param_; }
    std::size_t size() const { return t_.size(); }
    std::span<const double> t_grid() const { return t_; }
    std::span<const double> coord_grid() const { return coord_; }
    std::vector<double> theta_grid() const;
    std::span<const double> values() const { return k_; }

    bool monotone() const { return monotone_; }
    bool continuous() const { return continuous_; }
    double max_jump() const { return max_jump_; }
    double k_min() const { return k_min_; }
    double k_max() const { return k_max_; }

    bool has_evaluator() const { return static_cast<bool>(eval_); }
    // exact evaluation when an evaluator is attached, otherwise linear in t between grid points
    double evaluate_t(double t) const;
    double evaluate_coord(double coord) const;

    bool has_cdf() const { return static_cast<bool>(cdf_); }
    double cdf(double s) const { return cdf_(s); }
    void set_cdf(std::function<double(double)> cdf) { cdf_ = std::move(cdf); }
    void drop_evaluator() { eval_ = nullptr; cheap_evaluator_ = false; }
    // the evaluator costs far less than a pass over the scenarios
    bool cheap_evaluator() const { return cheap_evaluator_ && has_evaluator(); }
    void set_cheap_evaluator(bool cheap) { cheap_evaluator_ = cheap; }

    const std::string& label() const { return label_; }
    void set_label(std::string label) { label_ = std::move(label); }
    std::uint64_t fingerprint() const;

    // columns theta,K; comment lines are written first when given
    void write_csv(std::ostream& os, const std::string& comment = "") const;

    friend CapitalCurve build_capital_curve(std::function<double(double)> k_eval_coord, Parametrization param,
                                            const CurveOptions& options);

private:
    Parametrization param_ = Parametrization::bounded(0.0, 1.0);
    std::vector<double> t_, coord_, k_;
    bool monotone_ = true;
    bool continuous_ = true;
    double max_jump_ = 0.0;
    double k_min_ = 0.0;
    double k_max_ = 0.0;
    std::function<double(double)> eval_;
    std::function<double(double)> cdf_;
    bool cheap_evaluator_ = false;
    std::string label_;
};

// k_eval_coord is evaluated at working coordinates of param; grid is uniform in t.
CapitalCurve build_capital_curve(std::function<double(double)> k_eval_coord, Parametrization param,
                                 const CurveOptions& options = {});
// K as a function of theta on a bounded interval [a, b].
CapitalCurve build_capital_curve(std::function<double(double)> k_eval_theta, double a, double b,
                                 std::size_t grid_size = 2048);

// K(theta) = rho_theta(S) for a distortion family; the VaR family also carries F_S.
CapitalCurve distortion_curve(const DistortionFamily& family, const EmpiricalDistribution& dist,
                              const CurveOptions& options = {});

struct InverseTolerance {
    double abs_tol = 1e-10;
    double rel_tol = 1e-10;
    double clamp_rel = 1e-6;
};

struct ParameterPoint {
    double t = 0.0;
    double coord = 0.0;
    double theta = 0.0;
};

ParameterPoint right_inverse_point(const CapitalCurve& curve, double s, InversePolicy policy,
                                   const InverseTolerance& tol = {});
double right_inverse(const CapitalCurve& curve, double s, InversePolicy policy, const InverseTolerance& tol = {});

std::vector<ParameterPoint> sample_parameter_points(const CapitalCurve& curve, std::span<const double> s,
                                                    InversePolicy policy, Exec exec = Exec::parallel,
                                                    const InverseTolerance& tol = {});
std::vector<double> sample_parameter(const CapitalCurve& curve, const ScenarioSet& scen, InversePolicy policy,
                                     Exec exec = Exec::parallel);

struct SurjectivityReport {
    bool range_covered = false;
    bool monotone_or_continuous = false;
    double sample_min = 0.0;
    double sample_max = 0.0;
    double k_min = 0.0;
    double k_max = 0.0;
    bool passes() const { return range_covered && monotone_or_continuous; }
};

SurjectivityReport check_surjectivity(const CapitalCurve& curve, const EmpiricalDistribution& dist,
                                      double rel_tol = 1e-6);

} // namespace riskshare
