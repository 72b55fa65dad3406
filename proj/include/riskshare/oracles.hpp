#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace riskshare {

// Multivariate normal (or any elliptical law with these two moments).
class EllipticalParams {
public:
    EllipticalParams(Eigen::VectorXd mu, Eigen::MatrixXd sigma);
    EllipticalParams(const std::vector<double>& mu, const std::vector<std::vector<double>>& sigma);

    std::size_t dimension() const { return static_cast<std::size_t>(mu_.size()); }
    const Eigen::VectorXd& mu() const { return mu_; }
    const Eigen::MatrixXd& sigma() const { return sigma_; }
    double mu_s() const { return mu_.sum(); }
    double var_s() const { return sigma_.sum(); }
    double sd_s() const;
    // sigma_{i,S} = (Sigma 1)_i
    double cov_s(std::size_t i) const { return sigma_.row(static_cast<Eigen::Index>(i)).sum(); }
    double sd(std::size_t i) const;

private:
    Eigen::VectorXd mu_;
    Eigen::MatrixXd sigma_;
};

double normal_cmrs(const EllipticalParams& params, double s, std::size_t i);
std::vector<double> normal_cmrs(const EllipticalParams& params, double s);
// every Euler-distortion rule on elliptical scenarios reduces to this quota share
std::vector<double> quota_euler_closed_form(const EllipticalParams& params, double s);

std::vector<double> holistic_elliptical_quota(const EllipticalParams& params, const std::vector<double>& betas,
                                              double beta, double s);

double gaussian_tvar(double mu, double sigma, double level);

// principal branch, x >= -1/e
double lambert_w0(double x);
// W0(exp(log_x)) without forming exp(log_x)
double lambert_w0_exp(double log_x);

// K(theta) = m exp((m^2 - mu^2) / (2 sigma^2)) with m = mu + theta sigma^2 / mu
double normal_exponential_capital(double mu_s, double sigma_s, double theta);
// inverse of the map above; the branch follows the sign of s
double normal_exponential_theta(double mu_s, double sigma_s, double s);

// minimise sum_i sum_k unit_weights[i][k] (unit_values[i][k] - K_i)^2
//        + sum_k aggregate_weights[k] (aggregate_values[k] - sum_i K_i)^2
// optionally subject to sum_i K_i = sum_constraint
struct QuadraticProblem {
    std::vector<std::vector<double>> unit_weights;
    std::vector<std::vector<double>> unit_values;
    std::vector<double> aggregate_weights;
    std::vector<double> aggregate_values;
    std::optional<double> sum_constraint;
};

struct QuadraticSolution {
    std::vector<double> k;
    double multiplier = 0.0;
    double kkt_residual = 0.0;
    double objective = 0.0;
};

double quadratic_objective(const QuadraticProblem& problem, const std::vector<double>& k);
QuadraticSolution brute_force_constrained_quadratic(const QuadraticProblem& problem);

} // namespace riskshare
