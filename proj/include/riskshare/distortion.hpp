#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include <riskshare/axis.hpp>
#include <riskshare/estimators.hpp>

namespace riskshare {

enum class DistortionKind { wang, power, tvar_dual, var_indicator, user_table };

class DistortionFamily {
public:
    static DistortionFamily wang();
    static DistortionFamily power();
    static DistortionFamily tvar_dual();
    static DistortionFamily var_indicator();
    // values are row-major: one row of D over p_grid per theta in theta_grid
    static DistortionFamily user_table(std::vector<double> theta_grid, std::vector<double> p_grid,
                                       std::vector<double> values);

    DistortionKind kind() const { return kind_; }
    const Parametrization& parametrization() const { return param_; }
    double theta_lo() const { return param_.theta_lo(); }
    double theta_hi() const { return param_.theta_hi(); }
    std::string name() const;

    // D at a working coordinate (see Parametrization); the coordinate endpoints
    // give the limit distortions 1{p=1} and 1{p>0}.
    double eval_coord(double coord, double p) const;

    const std::vector<double>& table_theta() const { return table_theta_; }
    const std::vector<double>& table_p() const { return table_p_; }
    const std::vector<double>& table_values() const { return table_values_; }

private:
    DistortionFamily(DistortionKind kind, Parametrization param) : kind_(kind), param_(param) {}
    double eval_table(double theta, double p) const;

    DistortionKind kind_;
    Parametrization param_;
    std::vector<double> table_theta_;
    std::vector<double> table_p_;
    std::vector<double> table_values_;
};

double distortion_eval(const DistortionFamily& family, double theta, double p);

// Stieltjes sum over sorted atoms; theta at or beyond the interval ends returns
// the sample minimum or maximum.
double distortion_risk_measure(const DistortionFamily& family, double theta, const EmpiricalDistribution& dist);
double distortion_risk_measure_coord(const DistortionFamily& family, double coord, const EmpiricalDistribution& dist);

// Same quantity through the signed survival integral over distinct atoms.
double distortion_risk_measure_survival_form(const DistortionFamily& family, double theta,
                                             const EmpiricalDistribution& dist);

struct ValidationReport {
    bool boundary = true;          // D(0)=0 and D(1)=1 on the grid
    bool p_monotone = true;
    bool theta_monotone = true;
    bool theta_continuous = true;
    bool limit_a = true;
    bool limit_b = true;
    std::vector<std::string> messages;

    bool all_pass() const {
        return boundary && p_monotone && theta_monotone && theta_continuous && limit_a && limit_b;
    }
};

ValidationReport validate_family(const DistortionFamily& family, std::span<const double> theta_grid,
                                 std::span<const double> p_grid);
// default grids: 200 interior theta values and 201 p values
ValidationReport validate_family(const DistortionFamily& family);

DistortionFamily load_user_table_csv(std::istream& in);
DistortionFamily distortion_from_json(const nlohmann::json& doc);
nlohmann::json distortion_to_json(const DistortionFamily& family);

// Precomputed increments D(F(x_(k)-)) - D(F(x_(k))) of one family over one
// empirical distribution, evaluated at working coordinates.
class StieltjesKernel {
public:
    StieltjesKernel(DistortionFamily family, EmpiricalDistribution dist);

    std::size_t size() const { return dist_.size(); }
    const EmpiricalDistribution& dist() const { return dist_; }
    const DistortionFamily& family() const { return family_; }

    void increments(double coord, std::span<double> out) const;
    double risk_measure(double coord) const;
    // For the VaR indicator every increment but one vanishes.
    std::optional<std::size_t> single_atom(double coord) const;

private:
    double level_value(std::size_t j, double coord) const;

    DistortionFamily family_;
    EmpiricalDistribution dist_;
    std::vector<double> level_;      // survival levels, level_[0] = 1, level_[k+1] = P(X > x_(k))
    std::vector<double> transformed_;
};

} // namespace riskshare
