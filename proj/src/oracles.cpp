#include <riskshare/oracles.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <riskshare/errors.hpp>
#include <riskshare/special.hpp>

namespace riskshare {

EllipticalParams::EllipticalParams(Eigen::VectorXd mu, Eigen::MatrixXd sigma)
    : mu_(std::move(mu)), sigma_(std::move(sigma)) {
    const Eigen::Index n = mu_.size();
    if (n == 0 || sigma_.rows() != n || sigma_.cols() != n) {
        throw std::invalid_argument("elliptical parameters: dimensions do not match");
    }
    if (!mu_.allFinite() || !sigma_.allFinite()) {
        throw std::invalid_argument("elliptical parameters must be finite");
    }
    if ((sigma_ - sigma_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + sigma_.cwiseAbs().maxCoeff())) {
        throw std::invalid_argument("elliptical parameters: Sigma must be symmetric");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(sigma_);
    if (llt.info() != Eigen::Success) {
        throw std::invalid_argument("elliptical parameters: Sigma must be positive definite");
    }
}

EllipticalParams::EllipticalParams(const std::vector<double>& mu, const std::vector<std::vector<double>>& sigma)
    : EllipticalParams(
          [&] {
              Eigen::VectorXd m(static_cast<Eigen::Index>(mu.size()));
              for (std::size_t i = 0; i < mu.size(); ++i) {
                  m(static_cast<Eigen::Index>(i)) = mu[i];
              }
              return m;
          }(),
          [&] {
              const auto n = static_cast<Eigen::Index>(sigma.size());
              Eigen::MatrixXd s(n, n);
              for (Eigen::Index r = 0; r < n; ++r) {
                  if (sigma[static_cast<std::size_t>(r)].size() != sigma.size()) {
                      throw std::invalid_argument("elliptical parameters: Sigma must be square");
                  }
                  for (Eigen::Index c = 0; c < n; ++c) {
                      s(r, c) = sigma[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
                  }
              }
              return s;
          }()) {}

double EllipticalParams::sd_s() const {
    return std::sqrt(var_s());
}

double EllipticalParams::sd(std::size_t i) const {
    const auto k = static_cast<Eigen::Index>(i);
    return std::sqrt(sigma_(k, k));
}

double normal_cmrs(const EllipticalParams& params, double s, std::size_t i) {
    if (i >= params.dimension()) {
        throw std::out_of_range("normal_cmrs: unit index out of range");
    }
    return params.mu()(static_cast<Eigen::Index>(i)) + params.cov_s(i) / params.var_s() * (s - params.mu_s());
}

std::vector<double> normal_cmrs(const EllipticalParams& params, double s) {
    std::vector<double> h(params.dimension());
    for (std::size_t i = 0; i < h.size(); ++i) {
        h[i] = normal_cmrs(params, s, i);
    }
    return h;
}

std::vector<double> quota_euler_closed_form(const EllipticalParams& params, double s) {
    return normal_cmrs(params, s);
}

std::vector<double> holistic_elliptical_quota(const EllipticalParams& params, const std::vector<double>& betas,
                                              double beta, double s) {
    const std::size_t n = params.dimension();
    if (betas.size() != n) {
        throw std::invalid_argument("holistic_elliptical_quota: one beta per unit expected");
    }
    double sum_sd = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sum_sd += params.sd(i);
    }
    const double sd_s = params.sd_s();
    const double denom = (1.0 - beta) * sd_s + beta * sum_sd;
    std::vector<double> h(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double frac = (params.sd(i) - betas[i] * (sum_sd - sd_s)) / denom;
        h[i] = params.mu()(static_cast<Eigen::Index>(i)) + frac * (s - params.mu_s());
    }
    return h;
}

double gaussian_tvar(double mu, double sigma, double level) {
    if (!(level >= 0.0 && level < 1.0)) {
        throw std::invalid_argument("gaussian_tvar: level must lie in [0,1)");
    }
    if (!(sigma >= 0.0)) {
        throw std::invalid_argument("gaussian_tvar: sigma must be non-negative");
    }
    if (level == 0.0) {
        return mu;
    }
    return mu + sigma * normal_pdf(normal_quantile(level)) / (1.0 - level);
}

double lambert_w0(double x) {
    constexpr double branch = -1.0 / std::numbers::e;
    if (std::isnan(x) || x < branch) {
        throw std::domain_error("lambert_w0: argument below -1/e");
    }
    if (x == 0.0) {
        return 0.0;
    }
    if (x == std::numeric_limits<double>::infinity()) {
        return x;
    }
    double w;
    if (x < -0.25) {
        // series about the branch point
        const double p = std::sqrt(std::max(0.0, 2.0 * (std::numbers::e * x + 1.0)));
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p;
    } else if (x < 3.0) {
        w = std::log1p(x);
    } else {
        const double l1 = std::log(x);
        const double l2 = std::log(l1);
        w = l1 - l2 + l2 / l1;
    }
    for (int it = 0; it < 60; ++it) {
        const double ew = std::exp(w);
        const double f = w * ew - x;
        const double wp1 = w + 1.0;
        if (wp1 == 0.0) {
            break;
        }
        const double step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        const double next = std::max(w - step, -1.0);
        if (std::abs(next - w) <= 1e-16 * (1.0 + std::abs(w))) {
            w = next;
            break;
        }
        w = next;
    }
    return w;
}

double lambert_w0_exp(double log_x) {
    if (log_x < 700.0) {
        return lambert_w0(std::exp(log_x));
    }
    // w + log w = log_x by Newton
    double w = log_x - std::log(log_x);
    for (int it = 0; it < 50; ++it) {
        const double f = w + std::log(w) - log_x;
        const double next = w - f / (1.0 + 1.0 / w);
        if (std::abs(next - w) <= 1e-16 * w) {
            return next;
        }
        w = next;
    }
    return w;
}

double normal_exponential_capital(double mu_s, double sigma_s, double theta) {
    if (mu_s == 0.0 || !(sigma_s > 0.0)) {
        throw std::invalid_argument("normal exponential capital needs mu_S != 0 and sigma_S > 0");
    }
    const double v = sigma_s * sigma_s;
    const double m = mu_s + theta * v / mu_s;
    return m * std::exp((m * m - mu_s * mu_s) / (2.0 * v));
}

double normal_exponential_theta(double mu_s, double sigma_s, double s) {
    if (mu_s == 0.0 || !(sigma_s > 0.0)) {
        throw std::invalid_argument("normal exponential inverse needs mu_S != 0 and sigma_S > 0");
    }
    if (!std::isfinite(s)) {
        throw std::invalid_argument("normal exponential inverse needs a finite target");
    }
    const double v = sigma_s * sigma_s;
    double m = 0.0;
    if (s != 0.0) {
        // (m^2/v) exp(m^2/v) = (s^2/v) exp(mu^2/v)
        const double log_arg = 2.0 * std::log(std::abs(s)) - std::log(v) + mu_s * mu_s / v;
        const double w = lambert_w0_exp(log_arg);
        m = std::copysign(sigma_s * std::sqrt(w), s);
    }
    return (m - mu_s) * mu_s / v;
}

double quadratic_objective(const QuadraticProblem& problem, const std::vector<double>& k) {
    double total = 0.0;
    double sum_k = 0.0;
    for (std::size_t i = 0; i < problem.unit_weights.size(); ++i) {
        sum_k += k[i];
        for (std::size_t a = 0; a < problem.unit_weights[i].size(); ++a) {
            const double d = problem.unit_values[i][a] - k[i];
            total += problem.unit_weights[i][a] * d * d;
        }
    }
    for (std::size_t a = 0; a < problem.aggregate_weights.size(); ++a) {
        const double d = problem.aggregate_values[a] - sum_k;
        total += problem.aggregate_weights[a] * d * d;
    }
    return total;
}

QuadraticSolution brute_force_constrained_quadratic(const QuadraticProblem& problem) {
    const std::size_t n = problem.unit_weights.size();
    if (n == 0 || problem.unit_values.size() != n) {
        throw std::invalid_argument("quadratic problem: unit weights and values must match");
    }
    if (problem.aggregate_weights.size() != problem.aggregate_values.size()) {
        throw std::invalid_argument("quadratic problem: aggregate weights and values must match");
    }
    const bool constrained = problem.sum_constraint.has_value();
    const auto dim = static_cast<Eigen::Index>(n + (constrained ? 1 : 0));
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
    double b_total = 0.0;
    double bt = 0.0;
    for (std::size_t k = 0; k < problem.aggregate_weights.size(); ++k) {
        b_total += problem.aggregate_weights[k];
        bt += problem.aggregate_weights[k] * problem.aggregate_values[k];
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto& w = problem.unit_weights[i];
        const auto& v = problem.unit_values[i];
        if (w.size() != v.size()) {
            throw std::invalid_argument("quadratic problem: unit weights and values must match");
        }
        double wsum = 0.0;
        double wv = 0.0;
        for (std::size_t k = 0; k < w.size(); ++k) {
            wsum += w[k];
            wv += w[k] * v[k];
        }
        const auto r = static_cast<Eigen::Index>(i);
        a(r, r) += wsum;
        for (std::size_t j = 0; j < n; ++j) {
            a(r, static_cast<Eigen::Index>(j)) += b_total;
        }
        rhs(r) = wv + bt;
    }
    if (constrained) {
        const auto c = static_cast<Eigen::Index>(n);
        for (Eigen::Index r = 0; r < c; ++r) {
            a(r, c) = 1.0;
            a(c, r) = 1.0;
        }
        rhs(c) = *problem.sum_constraint;
    }
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (lu.rank() < dim) {
        throw DomainError("quadratic problem: singular system (degenerate weights)");
    }
    const Eigen::VectorXd x = lu.solve(rhs);
    QuadraticSolution sol;
    sol.k.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        sol.k[i] = x(static_cast<Eigen::Index>(i));
    }
    // the first-order conditions were divided by two; report the multiplier of the original objective
    sol.multiplier = constrained ? 2.0 * x(static_cast<Eigen::Index>(n)) : 0.0;
    sol.kkt_residual = (a * x - rhs).cwiseAbs().maxCoeff();
    sol.objective = quadratic_objective(problem, sol.k);
    return sol;
}

} // namespace riskshare
